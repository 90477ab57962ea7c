//! Renders a synthetic frame and relights it into a night-style image with
//! point-light blobs, gamma and sensor noise.
//!
//! `cargo run --example night_relighting -- [out_dir]`

use std::path::PathBuf;

use adds::data::{generate_synthetic_scene_with, relight_night_with, save_rgb, NightStyle, SceneConfig};
use adds::losses::ssim;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("adds-relight"));
    std::fs::create_dir_all(&out)?;
    let seq = generate_synthetic_scene_with(3, 3, &SceneConfig::sized(128, 256))?;
    let day = &seq.frames[0];
    let style = NightStyle::from_seed(11);
    println!("ambient {:.2}, {} light blobs", style.ambient, style.blobs.len());
    let night = relight_night_with(day, &style, 12);
    save_rgb(day, &out.join("day.png"))?;
    save_rgb(&night, &out.join("night.png"))?;
    println!("mean brightness day {:.3} night {:.3}", day.mean(), night.mean());
    println!("mean SSIM(day, night) {:.3}", ssim(day, &night)?.mean());
    println!("images in {}", out.display());
    Ok(())
}
