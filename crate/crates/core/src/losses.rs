//! Reconstruction, similarity, orthogonality and photometric objectives.
//!
//! Every loss has a graph form (`*_var`) used during training and a plain
//! tensor form for evaluation and tests. Graph forms take `(N, C, H, W)`
//! batches and average per-sample values over the batch.

use std::fmt;
use std::str::FromStr;

use adds_autograd::{Conv2dSpec, Graph, Padding, ParamStore, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, AddsError, Result};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// Reduced channel count of the orthogonality reducers.
pub const REDUCED_CHANNELS: usize = 16;
/// Penalty added to masked-out pixels before the per-pixel minimum.
const INVALID_PENALTY: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 0.1,
            lambda2: 1.0,
            lambda3: 1.0,
            lambda4: 1.0,
            alpha: 0.85,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ls = [self.lambda1, self.lambda2, self.lambda3, self.lambda4];
        if ls.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(AddsError::Config(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(AddsError::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Which terms of the total objective are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnabledLosses {
    pub recons: bool,
    pub simi: bool,
    pub ortho_f: bool,
    pub ortho_g: bool,
    pub photometric: bool,
}

impl EnabledLosses {
    pub fn all() -> Self {
        EnabledLosses {
            recons: true,
            simi: true,
            ortho_f: true,
            ortho_g: true,
            photometric: true,
        }
    }

    /// True when every term enabled here is also enabled in `other`.
    pub fn is_subset_of(&self, other: &EnabledLosses) -> bool {
        (!self.recons || other.recons)
            && (!self.simi || other.simi)
            && (!self.ortho_f || other.ortho_f)
            && (!self.ortho_g || other.ortho_g)
            && (!self.photometric || other.photometric)
    }
}

/// Per-term scalar values; `None` marks a disabled term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub recons: Option<f64>,
    pub simi: Option<f64>,
    pub ortho_f: Option<f64>,
    pub ortho_g: Option<f64>,
    pub photometric: Option<f64>,
    pub total: f64,
}

impl LossBundle {
    pub fn enabled(&self) -> EnabledLosses {
        EnabledLosses {
            recons: self.recons.is_some(),
            simi: self.simi.is_some(),
            ortho_f: self.ortho_f.is_some(),
            ortho_g: self.ortho_g.is_some(),
            photometric: self.photometric.is_some(),
        }
    }

    /// Builds a bundle from term values, filling in the weighted total.
    pub fn from_terms(
        recons: Option<f64>,
        simi: Option<f64>,
        ortho_f: Option<f64>,
        ortho_g: Option<f64>,
        photometric: Option<f64>,
        weights: &LossWeights,
    ) -> Result<Self> {
        let mut b = LossBundle {
            recons,
            simi,
            ortho_f,
            ortho_g,
            photometric,
            total: 0.0,
        };
        b.check_finite()?;
        b.total = weighted_total(&b, weights);
        Ok(b)
    }

    pub fn check_finite(&self) -> Result<()> {
        let named = [
            ("recons", self.recons),
            ("simi", self.simi),
            ("ortho_f", self.ortho_f),
            ("ortho_g", self.ortho_g),
            ("photometric", self.photometric),
        ];
        for (term, v) in named {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(AddsError::Divergence {
                        term: term.into(),
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Weighted sum in a fixed order: reconstruction, similarity,
/// orthogonality (`L_f + L_g`), photometric.
pub fn weighted_total(b: &LossBundle, w: &LossWeights) -> f64 {
    let ortho = match (b.ortho_f, b.ortho_g) {
        (Some(f), Some(g)) => Some(f + g),
        (f, g) => f.or(g),
    };
    let parts = [
        b.recons.map(|v| w.lambda1 * v),
        b.simi.map(|v| w.lambda2 * v),
        ortho.map(|v| w.lambda3 * v),
        b.photometric.map(|v| w.lambda4 * v),
    ];
    let mut acc: Option<f64> = None;
    for p in parts.into_iter().flatten() {
        acc = Some(match acc {
            Some(a) => a + p,
            None => p,
        });
    }
    acc.unwrap_or(0.0)
}

/// Graph nodes of the individual terms, each of shape `[1]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossTermVars {
    pub recons: Option<Var>,
    pub simi: Option<Var>,
    pub ortho_f: Option<Var>,
    pub ortho_g: Option<Var>,
    pub photometric: Option<Var>,
}

impl LossTermVars {
    pub fn values(&self, g: &Graph, weights: &LossWeights) -> Result<LossBundle> {
        let get = |v: Option<Var>| v.map(|v| g.value(v).item());
        LossBundle::from_terms(
            get(self.recons),
            get(self.simi),
            get(self.ortho_f),
            get(self.ortho_g),
            get(self.photometric),
            weights,
        )
    }
}

/// Weighted total as a graph node. Disabled terms are simply absent, so
/// they contribute nothing and receive no gradient. The value equals
/// [`weighted_total`] of the term values bit for bit.
pub fn total_loss_var(g: &mut Graph, terms: &LossTermVars, w: &LossWeights) -> Result<(Var, LossBundle)> {
    let bundle = terms.values(g, w)?;
    let ortho = match (terms.ortho_f, terms.ortho_g) {
        (Some(f), Some(gg)) => Some(g.add(f, gg)),
        (f, gg) => f.or(gg),
    };
    let mut parts = Vec::new();
    for (v, l) in [
        (terms.recons, w.lambda1),
        (terms.simi, w.lambda2),
        (ortho, w.lambda3),
        (terms.photometric, w.lambda4),
    ] {
        if let Some(v) = v {
            parts.push(g.scale(v, l));
        }
    }
    if parts.is_empty() {
        return Err(AddsError::Config("no loss term is enabled".into()));
    }
    let total = g.add_n(&parts);
    debug_assert_eq!(g.value(total).item().to_bits(), bundle.total.to_bits());
    Ok((total, bundle))
}

fn same_shape(g: &Graph, a: Var, b: Var, what: &str) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(invalid(format!(
            "{what}: shape mismatch {:?} vs {:?}",
            g.shape(a),
            g.shape(b)
        )));
    }
    Ok(())
}

/// Sign of the squared-mean residual term of the reconstruction loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconsSign {
    #[default]
    Plus,
    Minus,
}

/// One domain's reconstruction term, `(1/N)Σr² ± (1/N²)(Σr)²` per sample
/// with `N` counting channels, averaged over the batch.
pub fn domain_reconstruction_var(g: &mut Graph, recon: Var, image: Var, sign: ReconsSign) -> Result<Var> {
    same_shape(g, recon, image, "reconstruction loss")?;
    let n: usize = g.shape(recon)[1..].iter().product();
    let r = g.sub(recon, image);
    let sq = g.square(r);
    let mse = g.mean_per_sample(sq);
    let s = g.sum_per_sample(r);
    let s2 = g.square(s);
    let s2 = g.scale(s2, 1.0 / (n as f64 * n as f64));
    let per = match sign {
        ReconsSign::Plus => g.add(mse, s2),
        ReconsSign::Minus => g.sub(mse, s2),
    };
    Ok(g.mean(per))
}

/// Day plus night reconstruction terms.
pub fn reconstruction_loss_var(
    g: &mut Graph,
    recon_day: Var,
    day: Var,
    recon_night: Var,
    night: Var,
    sign: ReconsSign,
) -> Result<Var> {
    let d = domain_reconstruction_var(g, recon_day, day, sign)?;
    let n = domain_reconstruction_var(g, recon_night, night, sign)?;
    Ok(g.add(d, n))
}

pub fn reconstruction_loss(
    recon_day: &Tensor,
    day: &Tensor,
    recon_night: &Tensor,
    night: &Tensor,
    sign: ReconsSign,
) -> Result<f64> {
    let mut g = Graph::inference();
    let v = [recon_day, day, recon_night, night].map(|t| g.constant(batched(t)));
    let l = reconstruction_loss_var(&mut g, v[0], v[1], v[2], v[3], sign)?;
    Ok(g.value(l).item())
}

/// Adds a leading batch axis to `C×H×W` tensors; 4-D tensors pass through.
fn batched(t: &Tensor) -> Tensor {
    match t.ndim() {
        2 => t.reshape(&[1, 1, t.shape()[0], t.shape()[1]]),
        3 => t.reshape(&[1, t.shape()[0], t.shape()[1], t.shape()[2]]),
        _ => t.clone(),
    }
}

/// `mean((d_night − d_day)²)` with `d_day` detached: no gradient reaches the
/// day branch through this term.
pub fn similarity_loss_var(g: &mut Graph, d_night: Var, d_day: Var) -> Result<Var> {
    same_shape(g, d_night, d_day, "similarity loss")?;
    let pseudo = g.detach(d_day);
    let r = g.sub(d_night, pseudo);
    let sq = g.square(r);
    Ok(g.mean(sq))
}

pub fn similarity_loss(d_night: &Tensor, d_day: &Tensor) -> Result<f64> {
    let mut g = Graph::inference();
    let a = g.constant(d_night.clone());
    let b = g.constant(d_day.clone());
    let l = similarity_loss_var(&mut g, a, b)?;
    Ok(g.value(l).item())
}

/// The four learned 1×1 reducers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducerId {
    DayInv,
    DayPriv,
    NightInv,
    NightPriv,
}

impl ReducerId {
    pub const ALL: [ReducerId; 4] = [ReducerId::DayInv, ReducerId::DayPriv, ReducerId::NightInv, ReducerId::NightPriv];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReducerId::DayInv => "day_inv",
            ReducerId::DayPriv => "day_priv",
            ReducerId::NightInv => "night_inv",
            ReducerId::NightPriv => "night_priv",
        }
    }

    /// Parameter name of this reducer's weight at pyramid `level`.
    pub fn param_name(&self, level: usize) -> String {
        format!("reducers.{}.l{level}.weight", self.as_str())
    }
}

impl fmt::Display for ReducerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReducerId {
    type Err = AddsError;

    fn from_str(s: &str) -> Result<Self> {
        ReducerId::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| AddsError::Config(format!("unknown reducer `{s}`")))
    }
}

/// Applies the learned 1×1 reducer `id` of pyramid `level` to `f`.
pub fn reduce_features(g: &mut Graph, store: &ParamStore, f: Var, id: ReducerId, level: usize) -> Result<Var> {
    let name = id.param_name(level);
    let w = store
        .get(&name)
        .ok_or_else(|| AddsError::Config(format!("model has no reducer `{name}`")))?;
    let c = g.value(f).dims4().1;
    if w.shape()[1] != c {
        return Err(invalid(format!(
            "reducer `{name}` expects {} channels, feature has {c}",
            w.shape()[1]
        )));
    }
    let wv = g.param(store, &name);
    Ok(g.conv2d(f, wv, None, Conv2dSpec::new(1, 0, Padding::Zeros)))
}

/// How the per-domain inner product enters the orthogonality objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthoMode {
    /// `ip² / n` with `n` the flattened vector length.
    #[default]
    Squared,
    /// `|ip| / n`.
    Abs,
    /// The inner product itself.
    Raw,
}

/// Per-sample inner product of flattened `a` and `b`, transformed by
/// `mode` and averaged over the batch.
fn inner_product_term(g: &mut Graph, a: Var, b: Var, mode: OrthoMode) -> Result<Var> {
    same_shape(g, a, b, "orthogonality loss")?;
    let n: usize = g.shape(a)[1..].iter().product();
    let p = g.mul(a, b);
    let ip = g.sum_per_sample(p);
    let t = match mode {
        OrthoMode::Squared => {
            let s = g.square(ip);
            g.scale(s, 1.0 / n as f64)
        }
        OrthoMode::Abs => {
            let s = g.abs(ip);
            g.scale(s, 1.0 / n as f64)
        }
        OrthoMode::Raw => ip,
    };
    Ok(g.mean(t))
}

/// Feature orthogonality over reduced invariant/private features of both
/// domains.
pub fn feature_orthogonality_var(
    g: &mut Graph,
    inv_day: Var,
    priv_day: Var,
    inv_night: Var,
    priv_night: Var,
    mode: OrthoMode,
) -> Result<Var> {
    let d = inner_product_term(g, inv_day, priv_day, mode)?;
    let n = inner_product_term(g, inv_night, priv_night, mode)?;
    Ok(g.add(d, n))
}

pub fn feature_orthogonality_loss(v_i: &[&Tensor; 2], v_p: &[&Tensor; 2], mode: OrthoMode) -> Result<f64> {
    let mut g = Graph::inference();
    let vars = [v_i[0], v_p[0], v_i[1], v_p[1]].map(|t| g.constant(batched_vector(t)));
    let l = feature_orthogonality_var(&mut g, vars[0], vars[1], vars[2], vars[3], mode)?;
    Ok(g.value(l).item())
}

/// 1-D vectors become a batch of one; anything else gains a batch axis
/// unless already 4-D.
fn batched_vector(t: &Tensor) -> Tensor {
    if t.ndim() == 1 {
        t.reshape(&[1, t.numel()])
    } else {
        batched(t)
    }
}

/// Symmetric positive semidefinite `C×C` channel correlation.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub values: Tensor,
}

impl GramMatrix {
    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values.data()[i * self.channels() + j]
    }
}

/// `(N,C,H,W) -> (N,C,C)` with `G = F·Fᵀ/(H·W)`.
pub fn gram_var(g: &mut Graph, f: Var) -> Var {
    let (n, c, h, w) = g.value(f).dims4();
    let hw = h * w;
    let fv = g.value_arc(f);
    let mut out = Tensor::zeros(&[n, c, c]);
    for b in 0..n {
        let fb = &fv.data()[b * c * hw..(b + 1) * c * hw];
        let ob = &mut out.data_mut()[b * c * c..(b + 1) * c * c];
        for i in 0..c {
            for j in i..c {
                let s: f64 = fb[i * hw..(i + 1) * hw]
                    .iter()
                    .zip(&fb[j * hw..(j + 1) * hw])
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
                    / hw as f64;
                ob[i * c + j] = s;
                ob[j * c + i] = s;
            }
        }
    }
    g.custom(&[f], out, move |grad| {
        let mut df = Tensor::zeros(&[n, c, h, w]);
        for b in 0..n {
            let fb = &fv.data()[b * c * hw..(b + 1) * c * hw];
            let gb = &grad.data()[b * c * c..(b + 1) * c * c];
            let db = &mut df.data_mut()[b * c * hw..(b + 1) * c * hw];
            for i in 0..c {
                for j in 0..c {
                    let coef = (gb[i * c + j] + gb[j * c + i]) / hw as f64;
                    if coef == 0.0 {
                        continue;
                    }
                    for k in 0..hw {
                        db[i * hw + k] += coef * fb[j * hw + k];
                    }
                }
            }
        }
        vec![Some(df)]
    })
}

/// Gram matrix of a `C×H×W` feature map.
pub fn gram_matrix(f: &Tensor) -> Result<GramMatrix> {
    if f.ndim() != 3 || f.shape()[1] * f.shape()[2] == 0 {
        return Err(invalid(format!("gram matrix needs a non-empty C×H×W map, got {:?}", f.shape())));
    }
    let c = f.shape()[0];
    let mut g = Graph::inference();
    let x = g.constant(batched(f));
    let gm = gram_var(&mut g, x);
    Ok(GramMatrix {
        values: g.value(gm).reshape(&[c, c]),
    })
}

/// Gram orthogonality over both domains; inputs are `(N,C,H,W)` features.
pub fn gram_orthogonality_var(
    g: &mut Graph,
    inv_day: Var,
    priv_day: Var,
    inv_night: Var,
    priv_night: Var,
    mode: OrthoMode,
) -> Result<Var> {
    same_shape(g, inv_day, priv_day, "gram orthogonality (day)")?;
    same_shape(g, inv_night, priv_night, "gram orthogonality (night)")?;
    let grams = [inv_day, priv_day, inv_night, priv_night].map(|f| gram_var(g, f));
    let d = inner_product_term(g, grams[0], grams[1], mode)?;
    let n = inner_product_term(g, grams[2], grams[3], mode)?;
    Ok(g.add(d, n))
}

pub fn gram_orthogonality_loss(f_i: &[&Tensor; 2], f_p: &[&Tensor; 2], mode: OrthoMode) -> Result<f64> {
    let mut g = Graph::inference();
    let vars = [f_i[0], f_p[0], f_i[1], f_p[1]].map(|t| g.constant(batched(t)));
    let l = gram_orthogonality_var(&mut g, vars[0], vars[1], vars[2], vars[3], mode)?;
    Ok(g.value(l).item())
}

/// Per-pixel, per-channel SSIM over 3×3 windows with replicated borders.
pub fn ssim_var(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    same_shape(g, a, b, "ssim")?;
    let mu_a = g.box_filter3(a);
    let mu_b = g.box_filter3(b);
    let aa = g.square(a);
    let bb = g.square(b);
    let ab = g.mul(a, b);
    let e_aa = g.box_filter3(aa);
    let e_bb = g.box_filter3(bb);
    let e_ab = g.box_filter3(ab);
    let mu_aa = g.square(mu_a);
    let mu_bb = g.square(mu_b);
    let mu_ab = g.mul(mu_a, mu_b);
    let var_a = g.sub(e_aa, mu_aa);
    let var_b = g.sub(e_bb, mu_bb);
    let cov = g.sub(e_ab, mu_ab);

    let l_num = g.scale(mu_ab, 2.0);
    let l_num = g.add_scalar(l_num, SSIM_C1);
    let c_num = g.scale(cov, 2.0);
    let c_num = g.add_scalar(c_num, SSIM_C2);
    let num = g.mul(l_num, c_num);
    let l_den = g.add(mu_aa, mu_bb);
    let l_den = g.add_scalar(l_den, SSIM_C1);
    let c_den = g.add(var_a, var_b);
    let c_den = g.add_scalar(c_den, SSIM_C2);
    let den = g.mul(l_den, c_den);
    Ok(g.div(num, den))
}

/// SSIM map of two equally shaped images (`C×H×W` or `N×C×H×W`).
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(invalid(format!("ssim: shape mismatch {:?} vs {:?}", a.shape(), b.shape())));
    }
    let mut g = Graph::inference();
    let x = g.constant(batched(a));
    let y = g.constant(batched(b));
    let s = ssim_var(&mut g, x, y)?;
    Ok(g.value(s).reshape(a.shape()))
}

/// `α/2·(1 − SSIM) + (1 − α)·|Î − I|`, averaged over channels:
/// `(N,C,H,W) -> (N,1,H,W)`.
pub fn photometric_error_var(g: &mut Graph, warped: Var, target: Var, alpha: f64) -> Result<Var> {
    let s = ssim_var(g, warped, target)?;
    let s = g.mean_channels(s);
    let d = g.sub(warped, target);
    let l1 = g.abs(d);
    let l1 = g.mean_channels(l1);
    let dissim = g.scale(s, -alpha / 2.0);
    let dissim = g.add_scalar(dissim, alpha / 2.0);
    let l1 = g.scale(l1, 1.0 - alpha);
    Ok(g.add(dissim, l1))
}

/// Mean of `x` over pixels where `mask` is nonzero.
pub fn masked_mean_var(g: &mut Graph, x: Var, mask: &Tensor) -> Result<Var> {
    if g.shape(x) != mask.shape() {
        return Err(invalid(format!(
            "mask shape {:?} does not match {:?}",
            mask.shape(),
            g.shape(x)
        )));
    }
    let count = mask.sum();
    if count <= 0.0 {
        return Err(AddsError::DegenerateInput("validity mask is empty".into()));
    }
    let m = g.mul_const(x, mask);
    let s = g.sum(m);
    Ok(g.scale(s, 1.0 / count))
}

/// Photometric loss of one warped view against its target.
pub fn photometric_loss_var(g: &mut Graph, warped: Var, target: Var, mask: &Tensor, alpha: f64) -> Result<Var> {
    let e = photometric_error_var(g, warped, target, alpha)?;
    masked_mean_var(g, e, mask)
}

pub fn photometric_loss(warped: &Tensor, target: &Tensor, mask: &Tensor, alpha: f64) -> Result<f64> {
    if warped.shape() != target.shape() {
        return Err(invalid("photometric loss: shape mismatch"));
    }
    let mut g = Graph::inference();
    let w = g.constant(batched(warped));
    let t = g.constant(batched(target));
    let (n, _, h, ww) = g.value(w).dims4();
    let l = photometric_loss_var(&mut g, w, t, &mask.reshape(&[n, 1, h, ww]), alpha)?;
    Ok(g.value(l).item())
}

/// Per-pixel minimum over several `(error, mask)` candidates. A candidate
/// whose mask is zero at a pixel is pushed out of the minimum there; the
/// returned mask is the union of the candidate masks.
pub fn min_reprojection_var(g: &mut Graph, candidates: &[(Var, Tensor)]) -> Result<(Var, Tensor)> {
    let Some((first, first_mask)) = candidates.first() else {
        return Err(invalid("minimum reprojection over no candidates"));
    };
    let mut union = first_mask.clone();
    let mut best = penalize(g, *first, first_mask)?;
    for (e, m) in &candidates[1..] {
        union = union.zip_map(m, |a, b| if a != 0.0 || b != 0.0 { 1.0 } else { 0.0 });
        let p = penalize(g, *e, m)?;
        best = g.minimum(best, p);
    }
    Ok((best, union))
}

fn penalize(g: &mut Graph, e: Var, mask: &Tensor) -> Result<Var> {
    if g.shape(e) != mask.shape() {
        return Err(invalid("error map and mask shapes differ"));
    }
    let pen = mask.map(|m| if m != 0.0 { 0.0 } else { INVALID_PENALTY });
    Ok(g.add_const(e, &pen))
}

/// Edge-aware first-order smoothness of `disp` (`(N,1,H,W)`) weighted by the
/// gradients of `image` (`(N,C,H,W)`, treated as a constant).
pub fn smoothness_var(g: &mut Graph, disp: Var, image: &Tensor) -> Result<Var> {
    let (n, c1, h, w) = g.value(disp).dims4();
    let (ni, c, hi, wi) = image.dims4();
    if c1 != 1 || (ni, hi, wi) != (n, h, w) {
        return Err(invalid("smoothness: disparity and image shapes differ"));
    }
    let hw = h * w;
    let img_grad = |b: usize, i: usize, j: usize| -> f64 {
        (0..c)
            .map(|ch| (image.data()[(b * c + ch) * hw + i] - image.data()[(b * c + ch) * hw + j]).abs())
            .sum::<f64>()
            / c as f64
    };
    // (index, neighbour, weight) for every horizontal and vertical pair
    let mut pairs = Vec::new();
    let (cx, cy) = ((n * h * (w - 1)).max(1) as f64, (n * (h - 1) * w).max(1) as f64);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    pairs.push((b * hw + i, b * hw + i + 1, (-img_grad(b, i, i + 1)).exp() / cx));
                }
                if y + 1 < h {
                    pairs.push((b * hw + i, b * hw + i + w, (-img_grad(b, i, i + w)).exp() / cy));
                }
            }
        }
    }
    let dv = g.value_arc(disp);
    let value: f64 = pairs
        .iter()
        .map(|&(i, j, wt)| wt * (dv.data()[i] - dv.data()[j]).abs())
        .sum();
    Ok(g.custom(&[disp], Tensor::scalar(value), move |grad| {
        let go = grad.item();
        let mut dd = Tensor::zeros(&[n, 1, h, w]);
        for &(i, j, wt) in &pairs {
            let diff = dv.data()[i] - dv.data()[j];
            let s = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            dd.data_mut()[i] += go * wt * s;
            dd.data_mut()[j] -= go * wt * s;
        }
        vec![Some(dd)]
    }))
}
