//! Walks the ablation ladder U, P, PR, PRF, PRFG, PRFGS and shows which loss
//! terms each rung enables and which parameter groups its gradients reach.
//!
//! `cargo run --example ablation_ladder`

use adds::data::{Dataset, PairedSample, SceneConfig, SynthOptions};
use adds::network::{NetworkConfig, PARAM_GROUPS};
use adds::trainer::{forward_backward, AblationId, Batch, TrainConfig, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = Dataset::synthetic(&SynthOptions {
        sequences: 1,
        frames: 4,
        seed: 9,
        scene: SceneConfig::sized(32, 64),
    })?;
    let samples: Vec<&PairedSample> = ds.samples.iter().collect();
    for ab in AblationId::ALL {
        let cfg = TrainConfig {
            ablation: ab,
            network: NetworkConfig::tiny(),
            image_height: 32,
            image_width: 64,
            ..TrainConfig::default()
        };
        let batch = if cfg.ablation_config().paired {
            Batch::paired(&samples)?
        } else {
            let day: Vec<_> = samples.iter().map(|s| &s.day).collect();
            let night: Vec<_> = samples.iter().rev().map(|s| &s.night).collect();
            Batch::from_triplets(&day, &night)?
        };
        let trainer = Trainer::new(cfg.clone())?;
        let out = forward_backward(&trainer.model, &batch, &cfg)?;
        let reached: Vec<&str> = PARAM_GROUPS
            .iter()
            .copied()
            .filter(|g| {
                trainer.model.params.group_names(g).iter().any(|n| out.gradients.param(n).is_some())
            })
            .collect();
        println!("{ab:<6} total {:>9.4}  terms {:?}", out.bundle.total, out.bundle.enabled());
        println!("       groups {reached:?}");
    }
    Ok(())
}
