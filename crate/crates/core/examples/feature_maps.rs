//! Exports the most active private and invariant feature channels of a day
//! and a night image as grayscale PNGs.
//!
//! `cargo run --example feature_maps -- [out_dir]`

use std::path::PathBuf;

use adds::data::{generate_synthetic_scene_with, relight_night, SceneConfig};
use adds::eval::export_feature_maps;
use adds::network::{Domain, Model, NetworkConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("adds-features"));
    std::fs::create_dir_all(&out)?;
    let model = Model::new(NetworkConfig::tiny(), 0)?;
    let seq = generate_synthetic_scene_with(6, 3, &SceneConfig::sized(64, 128))?;
    let night = relight_night(&seq.frames[1], 2);
    for (domain, image) in [(Domain::Day, &seq.frames[1]), (Domain::Night, &night)] {
        let paths = export_feature_maps(&model, image, domain, 4, "frame001", &out)?;
        println!("{domain:?}: {} maps", paths.len());
        for p in paths.iter().take(2) {
            println!("  {}", p.display());
        }
    }
    Ok(())
}
