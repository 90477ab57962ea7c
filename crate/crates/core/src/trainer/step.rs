use adds_autograd::{Gradients, Graph, Mode, Tensor, Var};

use crate::data::{ImageTriplet, PairedSample};
use crate::error::{invalid, Result};
use crate::geometry::{disparity_to_depth_var, pose_matrix_var, warp_var, CameraIntrinsics};
use crate::losses::{
    feature_orthogonality_var, gram_orthogonality_var, masked_mean_var, min_reprojection_var, photometric_error_var,
    reconstruction_loss_var, similarity_loss_var, smoothness_var, total_loss_var, LossBundle, LossTermVars,
};
use crate::network::{Domain, Model};

use super::config::{PmPolicy, TrainConfig};

/// Frames `t−1, t, t+1` of several triplets stacked along the batch axis.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBatch {
    pub frames: [Tensor; 3],
    pub intrinsics: Vec<CameraIntrinsics>,
}

impl DomainBatch {
    pub fn from_triplets(triplets: &[&ImageTriplet]) -> Result<Self> {
        if triplets.is_empty() {
            return Err(invalid("empty batch"));
        }
        let frames = [0, 1, 2].map(|k| {
            let items: Vec<&Tensor> = triplets.iter().map(|t| &t.frames[k]).collect();
            Tensor::stack(&items)
        });
        let shape = triplets[0].frames[0].shape();
        if triplets.iter().any(|t| t.frames[0].shape() != shape) {
            return Err(invalid("batch triplets differ in shape"));
        }
        Ok(DomainBatch {
            frames,
            intrinsics: triplets.iter().map(|t| t.intrinsics).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.intrinsics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intrinsics.is_empty()
    }

    pub fn target(&self) -> &Tensor {
        &self.frames[1]
    }
}

/// One optimizer step's worth of day and night input.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub day: DomainBatch,
    pub night: DomainBatch,
}

impl Batch {
    pub fn paired(samples: &[&PairedSample]) -> Result<Self> {
        let day: Vec<&ImageTriplet> = samples.iter().map(|s| &s.day).collect();
        let night: Vec<&ImageTriplet> = samples.iter().map(|s| &s.night).collect();
        Batch::from_triplets(&day, &night)
    }

    /// Day and night triplets that need not show the same scene.
    pub fn from_triplets(day: &[&ImageTriplet], night: &[&ImageTriplet]) -> Result<Self> {
        if day.len() != night.len() {
            return Err(invalid("day and night halves of a batch differ in size"));
        }
        let b = Batch {
            day: DomainBatch::from_triplets(day)?,
            night: DomainBatch::from_triplets(night)?,
        };
        if b.day.target().shape() != b.night.target().shape() {
            return Err(invalid("day and night frames differ in shape"));
        }
        Ok(b)
    }

    pub fn get(&self, d: Domain) -> &DomainBatch {
        match d {
            Domain::Day => &self.day,
            Domain::Night => &self.night,
        }
    }
}

/// Loss values and gradients of one forward/backward pass; parameters are
/// not modified.
pub struct StepOutput {
    pub bundle: LossBundle,
    pub gradients: Gradients,
    /// Running-statistic updates in the order they were produced.
    pub buffer_updates: Vec<(String, Tensor)>,
    /// Finest-scale disparities `(N,1,H,W)` of the day and night targets.
    pub disparity: [Tensor; 2],
}

struct DomainForward {
    target: Var,
    invariant: Vec<Var>,
    private: Option<Vec<Var>>,
    disparities: Vec<Var>,
}

/// Finest-scale disparity of `image` through `domain`'s inference path.
pub fn forward_disparity(g: &mut Graph, model: &Model, image: Var, domain: Domain) -> Result<Var> {
    let inv = model.invariant_encode(g, image, domain)?;
    Ok(model.decode_depth(g, &inv)?[0])
}

/// Photometric term of one domain: averaged over decoder scales, each
/// upsampled to full resolution before warping.
fn photometric_term(
    g: &mut Graph,
    model: &Model,
    cfg: &TrainConfig,
    batch: &DomainBatch,
    fwd: &DomainForward,
) -> Result<Var> {
    let (_, _, h, w) = batch.target().dims4();
    let prev = g.constant(batch.frames[0].clone());
    let next = g.constant(batch.frames[2].clone());
    let mut sources = vec![(prev, model.pose_vector(g, fwd.target, prev)?)];
    if cfg.pm_policy == PmPolicy::MinReprojection {
        sources.push((next, model.pose_vector(g, fwd.target, next)?));
    }
    let poses: Vec<(Var, Var)> = sources
        .into_iter()
        .map(|(src, v)| (src, pose_matrix_var(g, v, false)))
        .collect();
    let alpha = cfg.weights.alpha;
    let identity: Vec<(Var, Tensor)> = if cfg.automask {
        let ones = Tensor::ones(&[batch.len(), 1, h, w]);
        poses
            .iter()
            .map(|&(src, _)| Ok((photometric_error_var(g, src, fwd.target, alpha)?, ones.clone())))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let mut per_scale = Vec::with_capacity(fwd.disparities.len());
    for (s, &disp) in fwd.disparities.iter().enumerate() {
        let up = g.resize_bilinear(disp, h, w);
        let depth = disparity_to_depth_var(g, up, cfg.min_depth, cfg.max_depth);
        let mut candidates = Vec::with_capacity(poses.len() + identity.len());
        for &(src, pose) in &poses {
            let (warped, mask) = warp_var(g, src, depth, pose, &batch.intrinsics)?;
            candidates.push((photometric_error_var(g, warped, fwd.target, alpha)?, mask));
        }
        candidates.extend(identity.iter().cloned());
        let mut loss = if candidates.len() == 1 {
            let (e, m) = &candidates[0];
            masked_mean_var(g, *e, m)?
        } else {
            let (e, m) = min_reprojection_var(g, &candidates)?;
            masked_mean_var(g, e, &m)?
        };
        if cfg.smoothness > 0.0 {
            let (_, _, hs, ws) = g.value(disp).dims4();
            let img = adds_autograd::resize_bilinear_tensor(batch.target(), hs, ws);
            let sm = smoothness_var(g, disp, &img)?;
            let sm = g.scale(sm, cfg.smoothness / (1u64 << s) as f64);
            loss = g.add(loss, sm);
        }
        per_scale.push(loss);
    }
    let sum = g.add_n(&per_scale);
    Ok(g.scale(sum, 1.0 / per_scale.len() as f64))
}

/// Forward pass over both domains with every term enabled by the
/// configured ablation, followed by the backward pass of the total.
pub fn forward_backward(model: &Model, batch: &Batch, cfg: &TrainConfig) -> Result<StepOutput> {
    let en = cfg.ablation_config().losses;
    let mut g = Graph::new(Mode::Train);
    let need_private = en.recons || en.ortho_f || en.ortho_g;
    let mut fwd = Vec::with_capacity(2);
    for d in Domain::BOTH {
        let target = g.constant(batch.get(d).target().clone());
        let invariant = model.invariant_encode(&mut g, target, d)?;
        let disparities = model.decode_depth(&mut g, &invariant)?;
        let private = if need_private {
            Some(model.private_encode(&mut g, target, d)?)
        } else {
            None
        };
        fwd.push(DomainForward {
            target,
            invariant,
            private,
            disparities,
        });
    }
    let (day, night) = (&fwd[0], &fwd[1]);
    let mut terms = LossTermVars::default();
    if en.recons {
        let rd = model.reconstruct(&mut g, day.private.as_ref().expect("private"), &day.invariant, Domain::Day)?;
        let rn = model.reconstruct(
            &mut g,
            night.private.as_ref().expect("private"),
            &night.invariant,
            Domain::Night,
        )?;
        terms.recons = Some(reconstruction_loss_var(&mut g, rd, day.target, rn, night.target, cfg.recons_sign)?);
    }
    if en.simi {
        terms.simi = Some(similarity_loss_var(&mut g, night.disparities[0], day.disparities[0])?);
    }
    if en.ortho_f || en.ortho_g {
        let levels = model.config.ortho_levels();
        let mut lf = Vec::new();
        let mut lg = Vec::new();
        for &l in &levels {
            let mut reduced = Vec::with_capacity(4);
            for (d, f) in Domain::BOTH.iter().zip([day, night]) {
                let p = f.private.as_ref().expect("private");
                reduced.push(model.reduce(&mut g, f.invariant[l], *d, true, l)?);
                reduced.push(model.reduce(&mut g, p[l], *d, false, l)?);
            }
            if en.ortho_f {
                lf.push(feature_orthogonality_var(
                    &mut g,
                    reduced[0],
                    reduced[1],
                    reduced[2],
                    reduced[3],
                    cfg.ortho_mode,
                )?);
            }
            if en.ortho_g {
                lg.push(gram_orthogonality_var(
                    &mut g,
                    reduced[0],
                    reduced[1],
                    reduced[2],
                    reduced[3],
                    cfg.ortho_mode,
                )?);
            }
        }
        let avg = |g: &mut Graph, xs: &[Var]| {
            let s = g.add_n(xs);
            g.scale(s, 1.0 / xs.len() as f64)
        };
        if en.ortho_f {
            terms.ortho_f = Some(avg(&mut g, &lf));
        }
        if en.ortho_g {
            terms.ortho_g = Some(avg(&mut g, &lg));
        }
    }
    if en.photometric {
        let pd = photometric_term(&mut g, model, cfg, &batch.day, day)?;
        let pn = photometric_term(&mut g, model, cfg, &batch.night, night)?;
        terms.photometric = Some(g.add(pd, pn));
    }
    let (total, bundle) = total_loss_var(&mut g, &terms, &cfg.weights)?;
    let gradients = g.backward(total);
    let disparity = [g.value(day.disparities[0]).clone(), g.value(night.disparities[0]).clone()];
    Ok(StepOutput {
        bundle,
        gradients,
        buffer_updates: g.take_buffer_updates(),
        disparity,
    })
}
