//! Evaluates a briefly trained model on a synthetic evaluation split with
//! median scaling at the 40 m and 60 m caps, and writes the metric report.
//!
//! `cargo run --release --example evaluate_depth -- [out_dir]`

use std::path::PathBuf;

use adds::data::{read_split, write_synthetic_dataset, Dataset, DatasetLayout, SceneConfig, SynthOptions};
use adds::eval::{evaluate_split, DEFAULT_CAPS};
use adds::network::{Domain, NetworkConfig};
use adds::trainer::{fit, LrSchedule, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("adds-eval"));
    let (h, w) = (64, 128);
    let opts = SynthOptions {
        sequences: 1,
        frames: 8,
        seed: 4,
        scene: SceneConfig::sized(h, w),
    };
    write_synthetic_dataset(&out, &opts)?;
    let layout = DatasetLayout::new(&out);
    let train = Dataset::load(&out, &read_split(&layout.split_path("train"))?, h, w)?;
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 2,
        lr_schedule: LrSchedule::constant(1e-3),
        network: NetworkConfig::tiny(),
        image_height: h,
        image_width: w,
        ..TrainConfig::default()
    };
    let model = fit(&train, &cfg, None)?.trainer.model;
    let split = read_split(&layout.split_path("eval"))?;
    for domain in Domain::BOTH {
        let report = evaluate_split(&model, &out, &split, domain, &DEFAULT_CAPS, h, w)?;
        println!("{domain:?}, {} images", report.per_image.len());
        print!("{}", report.summary_table());
        report.write_csv(&out.join(format!("report_{}.csv", domain.as_str())))?;
    }
    Ok(())
}
