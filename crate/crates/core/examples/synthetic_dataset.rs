//! Writes a small synthetic day/night dataset in the standard layout, then
//! loads the training split back and audits it.
//!
//! `cargo run --example synthetic_dataset -- [out_dir]`

use std::path::PathBuf;

use adds::data::{audit_split, read_split, write_synthetic_dataset, Dataset, DatasetLayout, SceneConfig, SynthOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("adds-synthetic"));
    let opts = SynthOptions {
        sequences: 2,
        frames: 8,
        seed: 7,
        scene: SceneConfig::sized(64, 128),
    };
    let summary = write_synthetic_dataset(&root, &opts)?;
    println!("wrote {summary:?} into {}", root.display());

    let layout = DatasetLayout::new(&root);
    let split = read_split(&layout.split_path("train"))?;
    println!("{} of {} training records unpaired", audit_split(&root, &split)?, split.len());
    let ds = Dataset::load(&root, &split, 64, 128)?;
    println!("{} paired samples, {} pairing mismatches", ds.len(), ds.pairing_mismatches());
    Ok(())
}
