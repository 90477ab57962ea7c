//! One forward/backward pass of the full training objective on a paired
//! batch, printing each loss term and the weighted total.
//!
//! `cargo run --example loss_terms`

use adds::data::{Dataset, PairedSample, SceneConfig, SynthOptions};
use adds::network::NetworkConfig;
use adds::trainer::{forward_backward, AblationId, Batch, TrainConfig, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = Dataset::synthetic(&SynthOptions {
        sequences: 1,
        frames: 4,
        seed: 3,
        scene: SceneConfig::sized(32, 64),
    })?;
    let samples: Vec<&PairedSample> = ds.samples.iter().collect();
    let batch = Batch::paired(&samples)?;
    let cfg = TrainConfig {
        network: NetworkConfig::tiny(),
        image_height: 32,
        image_width: 64,
        ..TrainConfig::default()
    };
    let trainer = Trainer::new(cfg.clone())?;
    let out = forward_backward(&trainer.model, &batch, &cfg)?;
    let b = out.bundle;
    let w = cfg.weights;
    println!("ablation {}", AblationId::PRFGS);
    println!("recons      {:>10.5} x {}", b.recons.unwrap_or(0.0), w.lambda1);
    println!("simi        {:>10.5} x {}", b.simi.unwrap_or(0.0), w.lambda2);
    println!("ortho_f     {:>10.5} x {}", b.ortho_f.unwrap_or(0.0), w.lambda3);
    println!("ortho_g     {:>10.5} x {}", b.ortho_g.unwrap_or(0.0), w.lambda3);
    println!("photometric {:>10.5} x {}", b.photometric.unwrap_or(0.0), w.lambda4);
    println!("total       {:>10.5}", b.total);
    println!("{} parameters received gradients", out.gradients.params().count());
    Ok(())
}
