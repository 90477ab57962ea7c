//! Stops a run part-way through an epoch, resumes it from the saved
//! checkpoint and checks that the continued log matches an uninterrupted run.
//!
//! `cargo run --release --example checkpoint_resume`

use adds::data::{Dataset, SceneConfig, SynthOptions};
use adds::network::NetworkConfig;
use adds::trainer::{fit, resume, Checkpoint, LrSchedule, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("adds-resume");
    let ds = Dataset::synthetic(&SynthOptions {
        sequences: 1,
        frames: 6,
        seed: 2,
        scene: SceneConfig::sized(32, 64),
    })?;
    let base = TrainConfig {
        epochs: 2,
        batch_size: 1,
        lr_schedule: LrSchedule::constant(1e-3),
        network: NetworkConfig::tiny(),
        image_height: 32,
        image_width: 64,
        ..TrainConfig::default()
    };
    let full = fit(&ds, &base, None)?;

    let cut = TrainConfig {
        max_steps: Some(3),
        ..base.clone()
    };
    let first = fit(&ds, &cut, Some(&dir))?;
    let path = first.final_checkpoint.expect("checkpoint written");
    let mut ck = Checkpoint::load(&path)?;
    println!("resuming at epoch {} step {} (batch {})", ck.epoch, ck.step, ck.batch_in_epoch);
    ck.config.max_steps = None;
    let rest = resume(&ds, ck, None)?;

    let joined: Vec<_> = first.log.iter().chain(&rest.log).collect();
    for (a, b) in full.log.iter().zip(&joined) {
        println!("step {:>2}: uninterrupted {:.10}  resumed {:.10}", a.step, a.losses.total, b.losses.total);
    }
    Ok(())
}
