#![allow(dead_code)]
pub mod oracles;

use adds::geometry::CameraIntrinsics;
use adds_autograd::{Graph, Tensor, Var};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const GRAD_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, r: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

/// Weighted sum with fixed random weights, turning any node into a scalar.
pub fn readout(g: &mut Graph, y: Var, seed: u64) -> Var {
    let shape = g.shape(y).to_vec();
    let w = uniform(&shape, -1.0, 1.0, &mut rng(seed));
    let p = g.mul_const(y, &w);
    g.sum(p)
}

pub fn small_intrinsics(h: usize, w: usize) -> CameraIntrinsics {
    CameraIntrinsics::new(0.9 * w as f64, 0.9 * w as f64, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap()
}

pub const SMALL_H: usize = 32;
pub const SMALL_W: usize = 64;

/// One synthetic sequence of `frames` frames at 32×64, i.e. `frames − 2`
/// paired samples.
pub fn small_dataset(frames: usize, seed: u64) -> adds::data::Dataset {
    adds::data::Dataset::synthetic(&adds::data::SynthOptions {
        sequences: 1,
        frames,
        seed,
        scene: adds::data::SceneConfig::sized(SMALL_H, SMALL_W),
    })
    .unwrap()
}

pub fn small_config(ablation: adds::trainer::AblationId) -> adds::trainer::TrainConfig {
    adds::trainer::TrainConfig {
        epochs: 1,
        batch_size: 1,
        lr_schedule: adds::trainer::LrSchedule::constant(1e-3),
        ablation,
        network: adds::network::NetworkConfig::tiny(),
        image_height: SMALL_H,
        image_width: SMALL_W,
        ..Default::default()
    }
}
