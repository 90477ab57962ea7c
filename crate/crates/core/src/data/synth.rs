//! Procedural driving-like scenes with exact depth.
//!
//! A pinhole camera 1.5 m above a textured ground plane moves forward along
//! its optical axis. Fronto-parallel textured rectangles stand on the ground
//! at random distances in front of a distant textured backdrop. Every
//! texture is anchored to world coordinates, so the same surface point keeps
//! its color from frame to frame and view synthesis with the true depth and
//! motion reproduces the next frame up to sampling effects.

use adds_autograd::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{CameraIntrinsics, PoseSE3};
use crate::network::Domain;

use super::{GroundTruthDepth, ImageTriplet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub num_rects: usize,
    /// Forward motion per frame, meters.
    pub step: f64,
    pub camera_height: f64,
    /// Distance of the backdrop from the first camera position, meters.
    pub backdrop: f64,
    /// Samples per pixel along each axis.
    pub supersample: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            height: 256,
            width: 512,
            num_rects: 14,
            step: 0.5,
            camera_height: 1.5,
            backdrop: 64.0,
            supersample: 3,
        }
    }
}

impl SceneConfig {
    pub fn sized(height: usize, width: usize) -> Self {
        SceneConfig {
            height,
            width,
            ..Default::default()
        }
    }

    /// Square pixels, 90° horizontal field of view, principal point at the
    /// image center.
    pub fn intrinsics(&self) -> CameraIntrinsics {
        let f = 0.5 * self.width as f64;
        CameraIntrinsics {
            fx: f,
            fy: f,
            cx: self.width as f64 / 2.0,
            cy: self.height as f64 / 2.0,
            width: self.width,
            height: self.height,
        }
    }
}

#[derive(Clone, Debug)]
struct Rect {
    z: f64,
    x0: f64,
    x1: f64,
    top: f64,
    color: [f64; 3],
    scale: f64,
    seed: u64,
}

#[derive(Clone, Debug)]
struct Scene {
    rects: Vec<Rect>,
    ground_seed: u64,
    backdrop_seed: u64,
    camera_height: f64,
    backdrop: f64,
}

/// Rendered frames with per-frame depth.
#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub frames: Vec<Tensor>,
    pub depths: Vec<GroundTruthDepth>,
    pub intrinsics: CameraIntrinsics,
    pub step: f64,
}

impl SyntheticSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Day triplet centered on frame `t`.
    pub fn triplet(&self, sequence: &str, t: usize) -> Result<ImageTriplet> {
        if t == 0 || t + 1 >= self.frames.len() {
            return Err(crate::error::AddsError::Sequence(format!(
                "frame {t} has no neighbours in a {}-frame sequence",
                self.frames.len()
            )));
        }
        ImageTriplet::new(
            [self.frames[t - 1].clone(), self.frames[t].clone(), self.frames[t + 1].clone()],
            Domain::Day,
            self.intrinsics,
            sequence,
            t,
        )
    }

    /// True transform from frame `t`'s camera to frame `t − 1`'s.
    pub fn pose_to_previous(&self) -> PoseSE3 {
        PoseSE3::from_translation([0.0, 0.0, self.step])
    }

    /// True transform from frame `t`'s camera to frame `t + 1`'s.
    pub fn pose_to_next(&self) -> PoseSE3 {
        PoseSE3::from_translation([0.0, 0.0, -self.step])
    }
}

/// Deterministic hash of a lattice point to `[0, 1)`.
fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut h = seed ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h = h.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let a = lattice(ix, iy, seed);
    let b = lattice(ix + 1, iy, seed);
    let c = lattice(ix, iy + 1, seed);
    let d = lattice(ix + 1, iy + 1, seed);
    let top = a + (b - a) * tx;
    let bot = c + (d - c) * tx;
    top + (bot - top) * ty
}

/// Contrast stretch of fbm output, clamped to `[0, 1]`.
fn stretch(n: f64) -> f64 {
    (2.5 * n - 0.5).clamp(0.0, 1.0)
}

/// Four octaves of value noise, roughly in `[0, 1]`.
fn fbm(x: f64, y: f64, seed: u64) -> f64 {
    let mut s = 0.0;
    let mut amp = 0.5;
    let mut freq = 1.0;
    for o in 0..4 {
        s += amp * value_noise(x * freq, y * freq, seed.wrapping_add(o * 7919));
        amp *= 0.6;
        freq *= 2.0;
    }
    s / 1.088
}

impl Scene {
    fn random(seed: u64, cfg: &SceneConfig, num_frames: usize) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let travel = cfg.step * (num_frames.saturating_sub(1)) as f64;
        let near = (2.0 + travel).min(50.0);
        let rects = (0..cfg.num_rects)
            .map(|_| {
                let z = rng.random_range(near..60.0);
                let half_w = 0.5 * rng.random_range(1.5..4.0) + 0.03 * z;
                let xc = rng.random_range(-0.8..0.8) * z;
                let height = rng.random_range(1.0..4.5) + 0.05 * z;
                Rect {
                    z,
                    x0: xc - half_w,
                    x1: xc + half_w,
                    top: cfg.camera_height - height,
                    color: [0, 1, 2].map(|_| rng.random_range(0.25..0.95)),
                    scale: rng.random_range(0.3..0.8),
                    seed: rng.random(),
                }
            })
            .collect();
        Scene {
            rects,
            ground_seed: rng.random(),
            backdrop_seed: rng.random(),
            camera_height: cfg.camera_height,
            backdrop: cfg.backdrop,
        }
    }

    /// Depth along the optical axis and color of the first surface hit by
    /// the ray through normalized image coordinates `(dx, dy)`.
    fn trace(&self, cam_z: f64, dx: f64, dy: f64) -> (f64, [f64; 3]) {
        let mut best = self.backdrop - cam_z;
        let mut hit = 0usize;
        if dy > 0.0 {
            let t = self.camera_height / dy;
            if t < best {
                best = t;
                hit = 1;
            }
        }
        let mut rect_hit = None;
        for (i, r) in self.rects.iter().enumerate() {
            let t = r.z - cam_z;
            if t <= 0.0 || t >= best {
                continue;
            }
            let (x, y) = (t * dx, t * dy);
            if x >= r.x0 && x <= r.x1 && y >= r.top && y <= self.camera_height {
                best = t;
                rect_hit = Some(i);
            }
        }
        let (x, y, wz) = (best * dx, best * dy, best + cam_z);
        let color = if let Some(i) = rect_hit {
            let r = &self.rects[i];
            let n = fbm(x / r.scale, y / r.scale, r.seed);
            let m = 0.1 + 0.9 * stretch(n);
            r.color.map(|c| c * m)
        } else if hit == 1 {
            let n = stretch(fbm(x / 0.6, wz / 0.6, self.ground_seed));
            let base = [0.42, 0.40, 0.36];
            base.map(|c| c * (0.2 + 1.4 * n))
        } else {
            let n = stretch(fbm(x / 1.5, y / 1.5, self.backdrop_seed));
            let base = [0.55, 0.62, 0.75];
            base.map(|c| c * (0.25 + 1.0 * n))
        };
        (best, color.map(|c| c.clamp(0.0, 1.0)))
    }

    fn render(&self, cfg: &SceneConfig, frame: usize) -> (Tensor, GroundTruthDepth) {
        let k = cfg.intrinsics();
        let (h, w) = (cfg.height, cfg.width);
        let cam_z = cfg.step * frame as f64;
        let s = cfg.supersample.max(1);
        let mut img = Tensor::zeros(&[3, h, w]);
        let mut depth = Tensor::zeros(&[h, w]);
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for sy in 0..s {
                    for sx in 0..s {
                        let u = x as f64 + (sx as f64 + 0.5) / s as f64;
                        let v = y as f64 + (sy as f64 + 0.5) / s as f64;
                        let (_, c) = self.trace(cam_z, (u - k.cx) / k.fx, (v - k.cy) / k.fy);
                        for ch in 0..3 {
                            acc[ch] += c[ch];
                        }
                    }
                }
                let (d, _) = self.trace(cam_z, (x as f64 + 0.5 - k.cx) / k.fx, (y as f64 + 0.5 - k.cy) / k.fy);
                depth.data_mut()[y * w + x] = d;
                for ch in 0..3 {
                    img.data_mut()[ch * h * w + y * w + x] = acc[ch] / (s * s) as f64;
                }
            }
        }
        (img, GroundTruthDepth { values: depth })
    }
}

/// Renders `num_frames` frames of a random scene at the default size.
pub fn generate_synthetic_scene(seed: u64, num_frames: usize) -> Result<SyntheticSequence> {
    generate_synthetic_scene_with(seed, num_frames, &SceneConfig::default())
}

pub fn generate_synthetic_scene_with(seed: u64, num_frames: usize, cfg: &SceneConfig) -> Result<SyntheticSequence> {
    if num_frames < 3 {
        return Err(invalid(format!("a sequence needs at least 3 frames, got {num_frames}")));
    }
    if cfg.height == 0 || cfg.width == 0 {
        return Err(invalid("scene size must be positive"));
    }
    let scene = Scene::random(seed, cfg, num_frames);
    let (frames, depths) = (0..num_frames).map(|f| scene.render(cfg, f)).unzip();
    Ok(SyntheticSequence {
        frames,
        depths,
        intrinsics: cfg.intrinsics(),
        step: cfg.step,
    })
}

/// Frame with a single rectangle filling the view at `depth` meters, for
/// construction checks.
pub fn render_wall(depth: f64, cfg: &SceneConfig) -> (Tensor, GroundTruthDepth) {
    let scene = Scene {
        rects: vec![Rect {
            z: depth,
            x0: -1e6,
            x1: 1e6,
            top: -1e6,
            color: [0.5, 0.6, 0.7],
            scale: 1.0,
            seed: 1,
        }],
        ground_seed: 2,
        backdrop_seed: 3,
        camera_height: 1e7,
        backdrop: cfg.backdrop.max(depth + 1.0),
    };
    scene.render(cfg, 0)
}
