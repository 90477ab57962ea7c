//! Inverse warping with known depth and motion: the previous frame of a
//! synthetic sequence is warped into the target view and scored with the
//! photometric loss, once with true depth and once with a flat guess.
//!
//! `cargo run --example view_synthesis -- [out_dir]`

use std::path::PathBuf;

use adds::data::{generate_synthetic_scene_with, save_rgb, SceneConfig};
use adds::geometry::{warp, DepthMap};
use adds::losses::photometric_loss;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("adds-warp"));
    std::fs::create_dir_all(&out)?;
    let (h, w) = (128, 256);
    let seq = generate_synthetic_scene_with(5, 3, &SceneConfig::sized(h, w))?;
    let pose = seq.pose_to_previous();
    let target = &seq.frames[1];
    let source = &seq.frames[0];
    let candidates = [
        ("true depth", DepthMap::new(seq.depths[1].values.clone())?),
        ("flat 10 m", DepthMap::constant(h, w, 10.0)?),
    ];
    for (name, depth) in &candidates {
        let (warped, mask) = warp(source, depth, &pose, &seq.intrinsics)?;
        let loss = photometric_loss(&warped, target, &mask, 0.85)?;
        let valid = mask.mean();
        println!("{name:>10}: photometric {loss:.4}, valid {:.1}%", 100.0 * valid);
        save_rgb(&warped, &out.join(format!("warped_{}.png", name.replace(' ', "_"))))?;
    }
    save_rgb(target, &out.join("target.png"))?;
    Ok(())
}
