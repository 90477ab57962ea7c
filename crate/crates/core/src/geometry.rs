//! Pinhole camera, rigid motion and differentiable view synthesis.
//!
//! Image-plane coordinates are continuous: pixel `(i, j)` covers
//! `[i, i+1) × [j, j+1)` and its center sits at `(i + 0.5, j + 0.5)`. Under
//! this convention cropping shifts the principal point and resizing scales
//! every intrinsic by the resize factor exactly. Normalized sampling grids
//! put `(-1, -1)` on the top-left pixel center and `(1, 1)` on the
//! bottom-right one.

use adds_autograd::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, AddsError, Result};

/// Points with a camera-frame depth at or below this are out of view.
pub const OUT_OF_VIEW_EPS: f64 = 1e-3;
pub const DEFAULT_MIN_DEPTH: f64 = 0.1;
pub const DEFAULT_MAX_DEPTH: f64 = 100.0;
/// Slack on the image border when deciding whether a sample is inside.
const BORDER_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(invalid(format!("focal lengths must be positive and finite: {self:?}")));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(invalid(format!("principal point outside the image: {self:?}")));
        }
        Ok(())
    }

    /// Uniform rescale of the image by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        CameraIntrinsics {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            width: (self.width as f64 * s).round() as usize,
            height: (self.height as f64 * s).round() as usize,
        }
    }

    /// Intrinsics after resizing the image to `width × height`.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        CameraIntrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        }
    }

    /// Intrinsics of the `height × width` window whose top-left corner is at
    /// pixel `(left, top)`.
    pub fn cropped(&self, top: usize, left: usize, height: usize, width: usize) -> Self {
        CameraIntrinsics {
            cx: self.cx - left as f64,
            cy: self.cy - top as f64,
            width,
            height,
            ..*self
        }
    }

    /// Image-plane position of a camera-frame point.
    pub fn project_point(&self, p: [f64; 3]) -> (f64, f64) {
        (self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy)
    }

    /// Camera-frame point at depth `z` along the ray through `(x, y)`.
    pub fn unproject(&self, x: f64, y: f64, z: f64) -> [f64; 3] {
        [(x - self.cx) / self.fx * z, (y - self.cy) / self.fy * z, z]
    }
}

pub type Mat3 = [[f64; 3]; 3];

/// Rigid transform `p ↦ R·p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSE3 {
    pub rotation: Mat3,
    pub translation: [f64; 3],
}

impl PoseSE3 {
    pub fn identity() -> Self {
        PoseSE3 {
            rotation: IDENTITY3,
            translation: [0.0; 3],
        }
    }

    pub fn from_translation(t: [f64; 3]) -> Self {
        PoseSE3 {
            rotation: IDENTITY3,
            translation: t,
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }

    pub fn inverse(&self) -> Self {
        let rt = transpose(&self.rotation);
        let t = mat_vec(&rt, self.translation);
        PoseSE3 {
            rotation: rt,
            translation: [-t[0], -t[1], -t[2]],
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &PoseSE3) -> Self {
        let r = mat_mul(&self.rotation, &other.rotation);
        let t = self.apply(other.translation);
        PoseSE3 {
            rotation: r,
            translation: t,
        }
    }

    /// Largest deviation from `RᵀR = I` and `det R = 1`.
    pub fn orthonormality_error(&self) -> f64 {
        let rtr = mat_mul(&transpose(&self.rotation), &self.rotation);
        let mut err: f64 = 0.0;
        for (i, row) in rtr.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                err = err.max((v - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        err.max((det3(&self.rotation) - 1.0).abs())
    }

    /// Row-major `3×4` matrix `[R | t]`.
    pub fn to_matrix34(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1], r[2][2], t[2],
        ]
    }

    pub fn from_matrix34(m: &[f64]) -> Self {
        PoseSE3 {
            rotation: [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]],
            translation: [m[3], m[7], m[11]],
        }
    }
}

const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn transpose(m: &Mat3) -> Mat3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = m[j][i];
        }
    }
    o
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    o
}

fn mat_vec(a: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn skew(v: [f64; 3]) -> Mat3 {
    [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
}

/// Rotation `exp([v]×)` and its partial derivatives `∂R/∂v_i`.
///
/// Uses `R = I + A(s)·K + B(s)·K²` with `K = [v]×`, `s = |v|²`,
/// `A = sin θ/θ`, `B = (1 − cos θ)/θ²`; both coefficients switch to their
/// Taylor series near zero so the map and its Jacobian stay exact there.
pub fn rodrigues_with_jacobian(v: [f64; 3]) -> (Mat3, [Mat3; 3]) {
    let s = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let (a, b, da, db) = if s < 1e-3 {
        (
            1.0 - s / 6.0 + s * s / 120.0 - s * s * s / 5040.0,
            0.5 - s / 24.0 + s * s / 720.0 - s * s * s / 40320.0,
            -1.0 / 6.0 + s / 60.0 - s * s / 1680.0,
            -1.0 / 24.0 + s / 360.0 - s * s / 13440.0,
        )
    } else {
        let th = s.sqrt();
        let (sn, cs) = th.sin_cos();
        (
            sn / th,
            (1.0 - cs) / s,
            (th * cs - sn) / (2.0 * th * s),
            (th * sn - 2.0 * (1.0 - cs)) / (2.0 * s * s),
        )
    };
    let k = skew(v);
    let k2 = mat_mul(&k, &k);
    let mut r = IDENTITY3;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    let mut jac = [[[0.0; 3]; 3]; 3];
    for (axis, d) in jac.iter_mut().enumerate() {
        let mut e = [0.0; 3];
        e[axis] = 1.0;
        let ei = skew(e);
        let eik = mat_mul(&ei, &k);
        let kei = mat_mul(&k, &ei);
        for i in 0..3 {
            for j in 0..3 {
                d[i][j] = 2.0 * v[axis] * (da * k[i][j] + db * k2[i][j])
                    + a * ei[i][j]
                    + b * (eik[i][j] + kei[i][j]);
            }
        }
    }
    (r, jac)
}

/// Pose from an axis-angle rotation (radians) and a translation (meters).
/// With `invert` the inverse transform is returned.
pub fn pose_vector_to_se3(axis_angle: [f64; 3], translation: [f64; 3], invert: bool) -> PoseSE3 {
    let (rotation, _) = rodrigues_with_jacobian(axis_angle);
    let pose = PoseSE3 {
        rotation,
        translation,
    };
    if invert {
        pose.inverse()
    } else {
        pose
    }
}

/// Per-pixel sigmoid disparity, values in `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    values: Tensor,
    pub scale_index: usize,
}

impl DisparityMap {
    /// `values` is `H×W`.
    pub fn new(values: Tensor, scale_index: usize) -> Result<Self> {
        if values.ndim() != 2 {
            return Err(invalid(format!("disparity must be H×W, got {:?}", values.shape())));
        }
        if let Some(v) = values.data().iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite disparity value {v}")));
        }
        Ok(DisparityMap { values, scale_index })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Metric depth in meters, `H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    values: Tensor,
}

impl DepthMap {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.ndim() != 2 {
            return Err(invalid(format!("depth must be H×W, got {:?}", values.shape())));
        }
        if let Some(v) = values.data().iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(invalid(format!("depth values must be positive and finite, found {v}")));
        }
        Ok(DepthMap { values })
    }

    pub fn constant(height: usize, width: usize, depth: f64) -> Result<Self> {
        DepthMap::new(Tensor::full(&[height, width], depth))
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.values.data()[y * self.width() + x]
    }

    /// `1×1×H×W` view for graph operations.
    pub fn as_nchw(&self) -> Tensor {
        self.values.reshape(&[1, 1, self.height(), self.width()])
    }
}

fn check_depth_range(min_depth: f64, max_depth: f64) -> Result<()> {
    if !(min_depth > 0.0 && min_depth < max_depth && max_depth.is_finite()) {
        return Err(AddsError::Config(format!(
            "need 0 < min_depth < max_depth, got ({min_depth}, {max_depth})"
        )));
    }
    Ok(())
}

/// `depth = 1 / (1/max + (1/min − 1/max)·disp)`.
pub fn disparity_to_depth(disp: &DisparityMap, min_depth: f64, max_depth: f64) -> Result<DepthMap> {
    check_depth_range(min_depth, max_depth)?;
    let lo = 1.0 / max_depth;
    let span = 1.0 / min_depth - lo;
    DepthMap::new(disp.values.map(|d| 1.0 / (lo + span * d)))
}

/// Graph version of [`disparity_to_depth`] for any tensor shape.
pub fn disparity_to_depth_var(g: &mut Graph, disp: Var, min_depth: f64, max_depth: f64) -> Var {
    let lo = 1.0 / max_depth;
    let span = 1.0 / min_depth - lo;
    let scaled = g.scale(disp, span);
    let shifted = g.add_scalar(scaled, lo);
    g.recip(shifted)
}

/// `(N, 6)` axis-angle + translation vectors to `(N, 3, 4)` matrices
/// `[R | t]`, or their inverses.
pub fn pose_matrix_var(g: &mut Graph, vec6: Var, invert: bool) -> Var {
    let shape = g.shape(vec6).to_vec();
    assert!(shape.len() == 2 && shape[1] == 6, "pose vectors must be N×6, got {shape:?}");
    let n = shape[0];
    let vv = g.value(vec6).clone();
    let mut out = Tensor::zeros(&[n, 3, 4]);
    let mut cache = Vec::with_capacity(n);
    for b in 0..n {
        let d = &vv.data()[b * 6..b * 6 + 6];
        let (r, jac) = rodrigues_with_jacobian([d[0], d[1], d[2]]);
        let pose = PoseSE3 {
            rotation: r,
            translation: [d[3], d[4], d[5]],
        };
        let p = if invert { pose.inverse() } else { pose };
        out.data_mut()[b * 12..b * 12 + 12].copy_from_slice(&p.to_matrix34());
        cache.push((r, jac, [d[3], d[4], d[5]]));
    }
    g.custom(&[vec6], out, move |grad| {
        let mut dv = Tensor::zeros(&[n, 6]);
        for (b, (r, jac, t)) in cache.iter().enumerate() {
            let gm = &grad.data()[b * 12..b * 12 + 12];
            let g_out_r = [[gm[0], gm[1], gm[2]], [gm[4], gm[5], gm[6]], [gm[8], gm[9], gm[10]]];
            let g_out_t = [gm[3], gm[7], gm[11]];
            // gradient w.r.t. the forward rotation and translation
            let (g_r, g_t) = if invert {
                // R' = Rᵀ, t' = −Rᵀ t
                let mut g_r = transpose(&g_out_r);
                for a in 0..3 {
                    for bb in 0..3 {
                        g_r[bb][a] -= g_out_t[a] * t[bb];
                    }
                }
                let rg = mat_vec(r, g_out_t);
                (g_r, [-rg[0], -rg[1], -rg[2]])
            } else {
                (g_out_r, g_out_t)
            };
            let dd = &mut dv.data_mut()[b * 6..b * 6 + 6];
            for axis in 0..3 {
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += g_r[i][j] * jac[axis][i][j];
                    }
                }
                dd[axis] = s;
            }
            dd[3..6].copy_from_slice(&g_t);
        }
        vec![Some(dv)]
    })
}

fn check_intrinsics_batch(ks: &[CameraIntrinsics], n: usize, h: usize, w: usize) {
    assert_eq!(ks.len(), n, "one intrinsics per batch sample");
    for k in ks {
        assert_eq!((k.height, k.width), (h, w), "intrinsics resolution must match the tensor");
    }
}

/// `(N,1,H,W)` depth to `(N,3,H,W)` camera-frame points through pixel
/// centers.
pub fn backproject_var(g: &mut Graph, depth: Var, ks: &[CameraIntrinsics]) -> Var {
    let (n, c, h, w) = g.value(depth).dims4();
    assert_eq!(c, 1, "depth must have one channel");
    check_intrinsics_batch(ks, n, h, w);
    let hw = h * w;
    let mut rays = Tensor::zeros(&[n, 2, h, w]);
    for (b, k) in ks.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                rays.data_mut()[b * 2 * hw + i] = (x as f64 + 0.5 - k.cx) / k.fx;
                rays.data_mut()[b * 2 * hw + hw + i] = (y as f64 + 0.5 - k.cy) / k.fy;
            }
        }
    }
    let dv = g.value(depth);
    let mut out = Tensor::zeros(&[n, 3, h, w]);
    for b in 0..n {
        for i in 0..hw {
            let d = dv.data()[b * hw + i];
            out.data_mut()[b * 3 * hw + i] = d * rays.data()[b * 2 * hw + i];
            out.data_mut()[b * 3 * hw + hw + i] = d * rays.data()[b * 2 * hw + hw + i];
            out.data_mut()[b * 3 * hw + 2 * hw + i] = d;
        }
    }
    g.custom(&[depth], out, move |grad| {
        let gd = grad.data();
        let dd = Tensor::from_fn(&[n, 1, h, w], |j| {
            let (b, i) = (j / hw, j % hw);
            gd[b * 3 * hw + i] * rays.data()[b * 2 * hw + i]
                + gd[b * 3 * hw + hw + i] * rays.data()[b * 2 * hw + hw + i]
                + gd[b * 3 * hw + 2 * hw + i]
        });
        vec![Some(dd)]
    })
}

/// Normalized coordinate of an image-plane position along an axis of
/// `size` pixels.
fn normalize_coord(x: f64, size: usize) -> f64 {
    if size > 1 {
        2.0 * (x - 0.5) / (size as f64 - 1.0) - 1.0
    } else {
        0.0
    }
}

fn norm_scale(size: usize) -> f64 {
    if size > 1 {
        2.0 / (size as f64 - 1.0)
    } else {
        0.0
    }
}

/// Projects `(N,3,H,W)` points through `pose` (`(N,3,4)`) and `K` into a
/// normalized `(N,H,W,2)` sampling grid. Also returns the `(N,1,H,W)`
/// in-front-of-camera flags; flagged-out points get grid `(-2, -2)` and no
/// gradient.
pub fn project_var(g: &mut Graph, points: Var, pose: Var, ks: &[CameraIntrinsics]) -> (Var, Tensor) {
    let (n, c, h, w) = g.value(points).dims4();
    assert_eq!(c, 3, "points must have three channels");
    assert_eq!(g.shape(pose), &[n, 3, 4], "pose must be N×3×4");
    check_intrinsics_batch(ks, n, h, w);
    let hw = h * w;
    let ks = ks.to_vec();
    let pv = g.value_arc(points);
    let tv = g.value_arc(pose);
    let mut grid = Tensor::zeros(&[n, h, w, 2]);
    let mut in_view = Tensor::zeros(&[n, 1, h, w]);
    let mut cam = vec![[0.0f64; 3]; n * hw];
    for b in 0..n {
        let m = &tv.data()[b * 12..b * 12 + 12];
        let k = &ks[b];
        for i in 0..hw {
            let p = [
                pv.data()[b * 3 * hw + i],
                pv.data()[b * 3 * hw + hw + i],
                pv.data()[b * 3 * hw + 2 * hw + i],
            ];
            let q = [
                m[0] * p[0] + m[1] * p[1] + m[2] * p[2] + m[3],
                m[4] * p[0] + m[5] * p[1] + m[6] * p[2] + m[7],
                m[8] * p[0] + m[9] * p[1] + m[10] * p[2] + m[11],
            ];
            cam[b * hw + i] = q;
            let o = (b * hw + i) * 2;
            if q[2] > OUT_OF_VIEW_EPS {
                in_view.data_mut()[b * hw + i] = 1.0;
                let (x, y) = k.project_point(q);
                grid.data_mut()[o] = normalize_coord(x, w);
                grid.data_mut()[o + 1] = normalize_coord(y, h);
            } else {
                grid.data_mut()[o] = -2.0;
                grid.data_mut()[o + 1] = -2.0;
            }
        }
    }
    let flags = in_view.clone();
    let var = g.custom(&[points, pose], grid, move |grad| {
        let gd = grad.data();
        let mut dp = Tensor::zeros(&[n, 3, h, w]);
        let mut dt = Tensor::zeros(&[n, 3, 4]);
        for b in 0..n {
            let m = &tv.data()[b * 12..b * 12 + 12];
            let k = &ks[b];
            let (sx, sy) = (norm_scale(w), norm_scale(h));
            for i in 0..hw {
                if in_view.data()[b * hw + i] == 0.0 {
                    continue;
                }
                let q = cam[b * hw + i];
                let z = q[2];
                let gx = gd[(b * hw + i) * 2] * sx;
                let gy = gd[(b * hw + i) * 2 + 1] * sy;
                // d(x, y)/dq
                let dq = [
                    gx * k.fx / z,
                    gy * k.fy / z,
                    -(gx * k.fx * q[0] + gy * k.fy * q[1]) / (z * z),
                ];
                let p = [
                    pv.data()[b * 3 * hw + i],
                    pv.data()[b * 3 * hw + hw + i],
                    pv.data()[b * 3 * hw + 2 * hw + i],
                ];
                let dtd = &mut dt.data_mut()[b * 12..b * 12 + 12];
                for r in 0..3 {
                    for cc in 0..3 {
                        dtd[r * 4 + cc] += dq[r] * p[cc];
                    }
                    dtd[r * 4 + 3] += dq[r];
                }
                for cc in 0..3 {
                    dp.data_mut()[b * 3 * hw + cc * hw + i] =
                        m[cc] * dq[0] + m[4 + cc] * dq[1] + m[8 + cc] * dq[2];
                }
            }
        }
        vec![Some(dp), Some(dt)]
    });
    (var, flags)
}

/// Bilinear sampling of `(N,C,H,W)` images at a normalized `(N,Ho,Wo,2)`
/// grid with border-clamp padding. The returned `(N,1,Ho,Wo)` mask is zero
/// where the grid leaves the image or `in_view` is zero.
pub fn grid_sample_var(g: &mut Graph, image: Var, grid: Var, in_view: &Tensor) -> (Var, Tensor) {
    let (n, c, h, w) = g.value(image).dims4();
    let gs = g.shape(grid).to_vec();
    assert!(gs.len() == 4 && gs[0] == n && gs[3] == 2, "grid must be N×Ho×Wo×2");
    let (ho, wo) = (gs[1], gs[2]);
    assert_eq!(in_view.shape(), &[n, 1, ho, wo], "in_view must be N×1×Ho×Wo");
    let hwo = ho * wo;
    let iv = g.value_arc(image);
    let gv = g.value_arc(grid);
    let (hx, hy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut mask = Tensor::zeros(&[n, 1, ho, wo]);
    // per output pixel: x0, x1, y0, y1, fx, fy, clamped-x?, clamped-y?
    let mut taps = Vec::with_capacity(n * hwo);
    for b in 0..n {
        for i in 0..hwo {
            let gx = gv.data()[(b * hwo + i) * 2];
            let gy = gv.data()[(b * hwo + i) * 2 + 1];
            let ix = (gx + 1.0) * hx;
            let iy = (gy + 1.0) * hy;
            let inside = ix >= -BORDER_SLACK
                && ix <= w as f64 - 1.0 + BORDER_SLACK
                && iy >= -BORDER_SLACK
                && iy <= h as f64 - 1.0 + BORDER_SLACK;
            if inside && in_view.data()[b * hwo + i] != 0.0 {
                mask.data_mut()[b * hwo + i] = 1.0;
            }
            let cx = ix.clamp(0.0, w as f64 - 1.0);
            let cy = iy.clamp(0.0, h as f64 - 1.0);
            let x0 = cx.floor() as usize;
            let y0 = cy.floor() as usize;
            taps.push(Tap {
                x0,
                y0,
                x1: (x0 + 1).min(w - 1),
                y1: (y0 + 1).min(h - 1),
                fx: cx - x0 as f64,
                fy: cy - y0 as f64,
                live_x: ix > 0.0 && ix < w as f64 - 1.0 && in_view.data()[b * hwo + i] != 0.0,
                live_y: iy > 0.0 && iy < h as f64 - 1.0 && in_view.data()[b * hwo + i] != 0.0,
            });
        }
    }
    let mut out = Tensor::zeros(&[n, c, ho, wo]);
    for b in 0..n {
        for ch in 0..c {
            let src = &iv.data()[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
            let dst = &mut out.data_mut()[(b * c + ch) * hwo..(b * c + ch + 1) * hwo];
            for (i, d) in dst.iter_mut().enumerate() {
                *d = taps[b * hwo + i].sample(src, w);
            }
        }
    }
    let var = g.custom(&[image, grid], out, move |grad| {
        let gd = grad.data();
        let mut di = Tensor::zeros(&[n, c, h, w]);
        let mut dg = Tensor::zeros(&[n, ho, wo, 2]);
        for b in 0..n {
            for ch in 0..c {
                let src = &iv.data()[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
                let gsl = &gd[(b * c + ch) * hwo..(b * c + ch + 1) * hwo];
                let dst = &mut di.data_mut()[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
                for (i, &go) in gsl.iter().enumerate() {
                    let t = &taps[b * hwo + i];
                    dst[t.y0 * w + t.x0] += go * (1.0 - t.fx) * (1.0 - t.fy);
                    dst[t.y0 * w + t.x1] += go * t.fx * (1.0 - t.fy);
                    dst[t.y1 * w + t.x0] += go * (1.0 - t.fx) * t.fy;
                    dst[t.y1 * w + t.x1] += go * t.fx * t.fy;
                    let v00 = src[t.y0 * w + t.x0];
                    let v01 = src[t.y0 * w + t.x1];
                    let v10 = src[t.y1 * w + t.x0];
                    let v11 = src[t.y1 * w + t.x1];
                    let o = (b * hwo + i) * 2;
                    if t.live_x {
                        let d = (1.0 - t.fy) * (v01 - v00) + t.fy * (v11 - v10);
                        dg.data_mut()[o] += go * d * hx;
                    }
                    if t.live_y {
                        let d = (1.0 - t.fx) * (v10 - v00) + t.fx * (v11 - v01);
                        dg.data_mut()[o + 1] += go * d * hy;
                    }
                }
            }
        }
        vec![Some(di), Some(dg)]
    });
    (var, mask)
}

struct Tap {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    fx: f64,
    fy: f64,
    live_x: bool,
    live_y: bool,
}

impl Tap {
    fn sample(&self, src: &[f64], w: usize) -> f64 {
        let top = src[self.y0 * w + self.x0] * (1.0 - self.fx) + src[self.y0 * w + self.x1] * self.fx;
        let bot = src[self.y1 * w + self.x0] * (1.0 - self.fx) + src[self.y1 * w + self.x1] * self.fx;
        top * (1.0 - self.fy) + bot * self.fy
    }
}

/// Synthesizes the target view from `source` (`(N,C,H,W)`) given target
/// depth (`(N,1,H,W)`) and the target-to-source pose (`(N,3,4)`).
pub fn warp_var(
    g: &mut Graph,
    source: Var,
    depth: Var,
    pose: Var,
    ks: &[CameraIntrinsics],
) -> Result<(Var, Tensor)> {
    let (n, _, h, w) = g.value(source).dims4();
    let (dn, dc, dh, dw) = g.value(depth).dims4();
    if (dn, dc, dh, dw) != (n, 1, h, w) {
        return Err(invalid(format!(
            "warp: depth {:?} does not match source {:?}",
            g.shape(depth),
            g.shape(source)
        )));
    }
    if g.shape(pose) != [n, 3, 4] {
        return Err(invalid(format!("warp: pose shape {:?}", g.shape(pose))));
    }
    if ks.len() != n || ks.iter().any(|k| (k.height, k.width) != (h, w)) {
        return Err(invalid("warp: intrinsics do not match the image resolution"));
    }
    let points = backproject_var(g, depth, ks);
    let (grid, in_view) = project_var(g, points, pose, ks);
    Ok(grid_sample_var(g, source, grid, &in_view))
}

/// Camera-frame points, `3×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointGrid {
    pub points: Tensor,
}

/// Normalized sampling positions `H×W×2` plus `1×H×W` in-view flags.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingGrid {
    pub coords: Tensor,
    pub in_view: Tensor,
}

pub fn backproject(depth: &DepthMap, k: &CameraIntrinsics) -> Result<PointGrid> {
    if (depth.height(), depth.width()) != (k.height, k.width) {
        return Err(invalid("backproject: depth and intrinsics resolution differ"));
    }
    let mut g = Graph::inference();
    let d = g.constant(depth.as_nchw());
    let p = backproject_var(&mut g, d, std::slice::from_ref(k));
    let (_, _, h, w) = g.value(p).dims4();
    Ok(PointGrid {
        points: g.value(p).reshape(&[3, h, w]),
    })
}

pub fn project(points: &PointGrid, k: &CameraIntrinsics, pose: &PoseSE3) -> Result<SamplingGrid> {
    let s = points.points.shape();
    if s.len() != 3 || s[0] != 3 || (s[1], s[2]) != (k.height, k.width) {
        return Err(invalid(format!("project: point grid {s:?} does not match intrinsics")));
    }
    let (h, w) = (s[1], s[2]);
    let mut g = Graph::inference();
    let p = g.constant(points.points.reshape(&[1, 3, h, w]));
    let t = g.constant(Tensor::new(&[1, 3, 4], pose.to_matrix34().to_vec()));
    let (grid, in_view) = project_var(&mut g, p, t, std::slice::from_ref(k));
    Ok(SamplingGrid {
        coords: g.value(grid).reshape(&[h, w, 2]),
        in_view: in_view.reshape(&[1, h, w]),
    })
}

/// Samples a `C×H×W` image; returns the `C×Ho×Wo` result and `Ho×Wo` mask.
pub fn bilinear_sample(image: &Tensor, grid: &SamplingGrid) -> Result<(Tensor, Tensor)> {
    if image.ndim() != 3 {
        return Err(invalid(format!("image must be C×H×W, got {:?}", image.shape())));
    }
    let gs = grid.coords.shape();
    if gs.len() != 3 || gs[2] != 2 {
        return Err(invalid(format!("grid must be H×W×2, got {gs:?}")));
    }
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let (ho, wo) = (gs[0], gs[1]);
    let mut g = Graph::inference();
    let img = g.constant(image.reshape(&[1, c, h, w]));
    let gr = g.constant(grid.coords.reshape(&[1, ho, wo, 2]));
    let (out, mask) = grid_sample_var(&mut g, img, gr, &grid.in_view.reshape(&[1, 1, ho, wo]));
    Ok((g.value(out).reshape(&[c, ho, wo]), mask.reshape(&[ho, wo])))
}

/// Target view synthesized from a `C×H×W` source image.
pub fn warp(source: &Tensor, depth: &DepthMap, pose: &PoseSE3, k: &CameraIntrinsics) -> Result<(Tensor, Tensor)> {
    if source.ndim() != 3 {
        return Err(invalid(format!("source must be C×H×W, got {:?}", source.shape())));
    }
    let (c, h, w) = (source.shape()[0], source.shape()[1], source.shape()[2]);
    let mut g = Graph::inference();
    let s = g.constant(source.reshape(&[1, c, h, w]));
    let d = g.constant(depth.as_nchw());
    let t = g.constant(Tensor::new(&[1, 3, 4], pose.to_matrix34().to_vec()));
    let (out, mask) = warp_var(&mut g, s, d, t, std::slice::from_ref(k))?;
    Ok((g.value(out).reshape(&[c, h, w]), mask.reshape(&[h, w])))
}

/// Sampling grid that reproduces the image unchanged.
pub fn identity_grid(height: usize, width: usize) -> Tensor {
    Tensor::from_fn(&[height, width, 2], |i| {
        let (p, axis) = (i / 2, i % 2);
        let (y, x) = (p / width, p % width);
        if axis == 0 {
            normalize_coord(x as f64 + 0.5, width)
        } else {
            normalize_coord(y as f64 + 0.5, height)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(50.0, 48.0, 16.0, 12.0, 32, 24).unwrap()
    }

    #[test]
    fn disparity_endpoints_and_midpoint() {
        let d = DisparityMap::new(Tensor::new(&[1, 3], vec![1.0 - 1e-12, 1e-12, 0.5]), 0).unwrap();
        let depth = disparity_to_depth(&d, 0.1, 100.0).unwrap();
        assert!((depth.values().data()[0] - 0.1).abs() < 1e-9);
        assert!((depth.values().data()[1] - 100.0).abs() < 1e-6);
        assert!((depth.values().data()[2] - 1.0 / (0.01 + 9.99 * 0.5)).abs() < 1e-12);
        assert!((depth.values().data()[2] - 0.19980).abs() < 1e-5);
    }

    #[test]
    fn disparity_rejects_non_finite_and_bad_range() {
        assert!(matches!(
            DisparityMap::new(Tensor::new(&[1, 1], vec![f64::NAN]), 0),
            Err(AddsError::InvalidInput(_))
        ));
        let d = DisparityMap::new(Tensor::full(&[1, 1], 0.5), 0).unwrap();
        assert!(disparity_to_depth(&d, 1.0, 0.5).is_err());
    }

    #[test]
    fn quarter_turn_about_z() {
        let p = pose_vector_to_se3([0.0, 0.0, std::f64::consts::FRAC_PI_2], [0.0; 3], false);
        let v = p.apply([1.0, 0.0, 0.0]);
        assert!((v[0]).abs() < 1e-9 && (v[1] - 1.0).abs() < 1e-9 && v[2].abs() < 1e-9);
    }

    #[test]
    fn zero_vector_is_identity() {
        assert_eq!(pose_vector_to_se3([0.0; 3], [0.0; 3], false), PoseSE3::identity());
    }

    #[test]
    fn principal_ray_backprojection() {
        let kk = k();
        assert_eq!(kk.unproject(kk.cx, kk.cy, 5.0), [0.0, 0.0, 5.0]);
        assert_eq!(kk.unproject(kk.cx + kk.fx, kk.cy, 2.0), [2.0, 0.0, 2.0]);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(-1.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 5.0, 1.0, 4, 4).is_err());
        let s = k().scaled(0.5);
        assert_eq!((s.fx, s.fy, s.cx, s.cy), (25.0, 24.0, 8.0, 6.0));
    }

    #[test]
    fn identity_pose_reproduces_pixel_grid() {
        let kk = k();
        let depth = DepthMap::new(Tensor::from_fn(&[24, 32], |i| 1.0 + (i % 7) as f64)).unwrap();
        let pts = backproject(&depth, &kk).unwrap();
        let grid = project(&pts, &kk, &PoseSE3::identity()).unwrap();
        assert!(grid.coords.max_abs_diff(&identity_grid(24, 32)) < 1e-12);
        assert!(grid.in_view.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn behind_camera_is_flagged() {
        let kk = k();
        let depth = DepthMap::constant(24, 32, 1.0).unwrap();
        let pts = backproject(&depth, &kk).unwrap();
        let pose = PoseSE3::from_translation([0.0, 0.0, -2.0]);
        let grid = project(&pts, &kk, &pose).unwrap();
        assert!(grid.in_view.data().iter().all(|&v| v == 0.0));
        let img = Tensor::full(&[1, 24, 32], 0.3);
        let (_, mask) = bilinear_sample(&img, &grid).unwrap();
        assert!(mask.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn warp_rejects_shape_mismatch() {
        let src = Tensor::zeros(&[3, 10, 10]);
        let depth = DepthMap::constant(24, 32, 1.0).unwrap();
        assert!(warp(&src, &depth, &PoseSE3::identity(), &k()).is_err());
    }
}
