//! Trains the full model on a small synthetic paired dataset, writing the
//! per-step loss log and epoch checkpoints.
//!
//! `cargo run --release --example train_desk_scale -- [out_dir] [steps]`

use std::path::PathBuf;

use adds::data::{Dataset, SceneConfig, SynthOptions};
use adds::network::NetworkConfig;
use adds::trainer::{fit, AblationId, LrSchedule, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("adds-train"));
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(60);
    let ds = Dataset::synthetic(&SynthOptions {
        sequences: 2,
        frames: 12,
        seed: 0,
        scene: SceneConfig::sized(64, 128),
    })?;
    let cfg = TrainConfig {
        epochs: steps.div_ceil(ds.len().div_ceil(2)),
        batch_size: 2,
        lr_schedule: LrSchedule::constant(1e-3),
        ablation: AblationId::PRFGS,
        network: NetworkConfig::tiny(),
        image_height: 64,
        image_width: 128,
        max_steps: Some(steps),
        ..TrainConfig::default()
    };
    let run = fit(&ds, &cfg, Some(&out))?;
    for row in run.log.iter().step_by(10) {
        println!(
            "step {:>4}  pm {:.4}  total {:.4}",
            row.step,
            row.losses.photometric.unwrap_or(f64::NAN),
            row.losses.total
        );
    }
    println!("{} epoch checkpoints, log and final checkpoint in {}", run.checkpoints.len(), out.display());
    Ok(())
}
