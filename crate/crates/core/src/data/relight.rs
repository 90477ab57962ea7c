//! Procedural day-to-night relighting.

use adds_autograd::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const NIGHT_GAMMA: f64 = 2.0;
pub const NIGHT_NOISE_STD: f64 = 0.02;

/// A point light in normalized image coordinates (`x` and `y` in `[0, 1]`,
/// `sigma` relative to the image width).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LightBlob {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub gain: f64,
    pub tint: [f64; 3],
}

/// Illumination applied to every frame of a night sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct NightStyle {
    pub ambient: f64,
    pub blobs: Vec<LightBlob>,
}

impl NightStyle {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ambient = rng.random_range(0.4..0.6);
        let n = rng.random_range(1..=3);
        let blobs = (0..n)
            .map(|_| LightBlob {
                x: rng.random_range(0.1..0.9),
                y: rng.random_range(0.35..0.95),
                sigma: rng.random_range(0.06..0.2),
                gain: rng.random_range(0.5..1.0),
                tint: [1.0, rng.random_range(0.8..1.0), rng.random_range(0.55..0.85)],
            })
            .collect();
        NightStyle { ambient, blobs }
    }

    /// Per-channel illumination factor at pixel `(x, y)` of a `h×w` image.
    pub fn illumination(&self, x: usize, y: usize, h: usize, w: usize) -> [f64; 3] {
        let u = (x as f64 + 0.5) / w as f64;
        let v = (y as f64 + 0.5) / h as f64;
        let aspect = h as f64 / w as f64;
        let mut l = [self.ambient; 3];
        for b in &self.blobs {
            let d2 = (u - b.x).powi(2) + ((v - b.y) * aspect).powi(2);
            let e = b.gain * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
            for c in 0..3 {
                l[c] += e * b.tint[c];
            }
        }
        l
    }
}

/// Night rendition of a `3×H×W` day image: illumination, gamma, sensor
/// noise, clamp. Pure per-pixel transform, deterministic in `seed`.
pub fn relight_night(day: &Tensor, seed: u64) -> Tensor {
    relight_night_with(day, &NightStyle::from_seed(seed), seed ^ 0x6E69_6768_74)
}

pub fn relight_night_with(day: &Tensor, style: &NightStyle, noise_seed: u64) -> Tensor {
    let (c, h, w) = (day.shape()[0], day.shape()[1], day.shape()[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = Normal::new(0.0, NIGHT_NOISE_STD).expect("valid std");
    let mut out = Tensor::zeros(&[c, h, w]);
    for y in 0..h {
        for x in 0..w {
            let l = style.illumination(x, y, h, w);
            for ch in 0..c {
                let i = ch * h * w + y * w + x;
                let lit = (day.data()[i] * l[ch.min(2)]).clamp(0.0, 1.0);
                out.data_mut()[i] = lit.powf(NIGHT_GAMMA);
            }
        }
    }
    for v in out.data_mut() {
        *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
    }
    out
}
