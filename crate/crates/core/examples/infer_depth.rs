//! Predicts a metric depth map for a single day or night image with a fresh
//! or checkpointed model and saves it as a 16-bit millimetre PNG.
//!
//! `cargo run --release --example infer_depth -- [checkpoint]`

use adds::data::{generate_synthetic_scene_with, relight_night, save_depth_map, SceneConfig};
use adds::network::{Domain, Model, NetworkConfig};
use adds::trainer::{infer, Checkpoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = match std::env::args().nth(1) {
        Some(p) => Checkpoint::load(p.as_ref())?.model()?,
        None => Model::new(NetworkConfig::tiny(), 0)?,
    };
    let (h, w) = (64, 128);
    let seq = generate_synthetic_scene_with(8, 3, &SceneConfig::sized(h, w))?;
    let night = relight_night(&seq.frames[1], 1);
    let out = std::env::temp_dir().join("adds-infer");
    std::fs::create_dir_all(&out)?;
    for (domain, image) in [(Domain::Day, &seq.frames[1]), (Domain::Night, &night)] {
        let depth = infer(image, domain, &model)?;
        let v = depth.values().data();
        let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        println!("{domain:?}: depth {lo:.2}..{hi:.2} m");
        save_depth_map(&depth, &out.join(format!("depth_{}.png", domain.as_str())))?;
    }
    println!("depth maps in {}", out.display());
    Ok(())
}
