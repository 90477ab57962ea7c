//! Domain-separated depth network.
//!
//! Each domain owns a first-layer stem; everything after it in the depth
//! path (residual trunk and depth decoder) is one set of parameters used by
//! both domains. Private encoders, reconstruction decoders and reducers are
//! per domain; the pose regressor is shared.

mod config;
mod decoder;
mod encoder;
mod layers;
mod pose;

use std::fmt;
use std::str::FromStr;

use adds_autograd::{Graph, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{EncoderDepth, NetworkConfig, Schedule};
pub use pose::POSE_SCALE;

use crate::error::{invalid, AddsError, Result};
use crate::geometry::{pose_vector_to_se3, PoseSE3};
use crate::losses::ReducerId;

/// Parameter groups, in checkpoint order.
pub const PARAM_GROUPS: [&str; 10] = [
    "stem_day",
    "stem_night",
    "shared_encoder",
    "private_day",
    "private_night",
    "depth_decoder",
    "recon_day",
    "recon_night",
    "reducers",
    "pose_net",
];

/// Groups read by the depth inference path of `domain`.
pub fn inference_groups(domain: Domain) -> [&'static str; 3] {
    [domain.stem_group(), "shared_encoder", "depth_decoder"]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Day,
    Night,
}

impl Domain {
    pub const BOTH: [Domain; 2] = [Domain::Day, Domain::Night];

    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Day => "day",
            Domain::Night => "night",
        }
    }

    pub fn stem_group(&self) -> &'static str {
        match self {
            Domain::Day => "stem_day",
            Domain::Night => "stem_night",
        }
    }

    pub fn private_group(&self) -> &'static str {
        match self {
            Domain::Day => "private_day",
            Domain::Night => "private_night",
        }
    }

    pub fn recon_group(&self) -> &'static str {
        match self {
            Domain::Day => "recon_day",
            Domain::Night => "recon_night",
        }
    }

    pub fn reducer(&self, invariant: bool) -> ReducerId {
        match (self, invariant) {
            (Domain::Day, true) => ReducerId::DayInv,
            (Domain::Day, false) => ReducerId::DayPriv,
            (Domain::Night, true) => ReducerId::NightInv,
            (Domain::Night, false) => ReducerId::NightPriv,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = AddsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "day" => Ok(Domain::Day),
            "night" => Ok(Domain::Night),
            other => Err(AddsError::Config(format!("unknown domain `{other}` (expected day or night)"))),
        }
    }
}

/// Feature maps at strides 2, 4, 8, 16 and 32, each `(N,C,H,W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid {
    pub levels: Vec<Tensor>,
}

impl FeaturePyramid {
    pub fn from_graph(g: &Graph, vars: &[Var]) -> Self {
        FeaturePyramid {
            levels: vars.iter().map(|&v| g.value(v).clone()).collect(),
        }
    }

    pub fn deepest(&self) -> &Tensor {
        self.levels.last().expect("non-empty pyramid")
    }
}

/// Parameters and configuration of the whole network.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: NetworkConfig,
    pub params: ParamStore,
    schedule: Schedule,
}

impl Model {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let s = config.encoder_depth.schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let ch = s.encoder_channels;
        encoder::init_stem(&mut store, "stem_day", ch[0], &mut rng);
        encoder::init_stem(&mut store, "stem_night", ch[0], &mut rng);
        encoder::init_trunk(&mut store, "shared_encoder", &s, &mut rng);
        for d in Domain::BOTH {
            let p = d.private_group();
            encoder::init_stem(&mut store, &format!("{p}.stem"), ch[0], &mut rng);
            encoder::init_trunk(&mut store, p, &s, &mut rng);
        }
        let depth_scales: Vec<usize> = (0..config.num_scales).collect();
        decoder::init_decoder(
            &mut store,
            "depth_decoder",
            &ch,
            &s.decoder_channels,
            1,
            &depth_scales,
            &mut rng,
        );
        for d in Domain::BOTH {
            decoder::init_decoder(&mut store, d.recon_group(), &ch, &s.decoder_channels, 3, &[0], &mut rng);
        }
        for id in ReducerId::ALL {
            for level in config.ortho_levels() {
                let bound = 1.0 / (ch[level] as f64).sqrt();
                let w = Tensor::from_fn(&[config.cr, ch[level], 1, 1], |_| rng.random_range(-bound..bound));
                store.insert(id.param_name(level), w);
            }
        }
        pose::init_pose_net(&mut store, &s.pose_channels, &mut rng);
        Ok(Model {
            config,
            params: store,
            schedule: s,
        })
    }

    /// Rebuilds a model around previously saved parameters.
    pub fn from_params(config: NetworkConfig, params: ParamStore) -> Result<Self> {
        let reference = Model::new(config.clone(), 0)?;
        for (name, t) in reference.params.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(AddsError::Version(format!(
                        "parameter `{name}` has shape {:?}, configuration expects {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(AddsError::Version(format!("parameter `{name}` is missing"))),
            }
        }
        for (name, _) in reference.params.buffers() {
            if params.buffer(name).is_none() {
                return Err(AddsError::Version(format!("buffer `{name}` is missing")));
            }
        }
        if let Some(extra) = params.names().find(|n| !reference.params.contains(n)) {
            return Err(AddsError::Version(format!("unexpected parameter `{extra}`")));
        }
        Ok(Model {
            schedule: reference.schedule,
            config,
            params,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn check_input(&self, g: &Graph, image: Var) -> Result<()> {
        let shape = g.shape(image);
        if shape.len() != 4 || shape[1] != 3 {
            return Err(invalid(format!("expected an N×3×H×W image batch, got {shape:?}")));
        }
        if shape[2] % 32 != 0 || shape[3] % 32 != 0 || shape[2] == 0 || shape[3] == 0 {
            return Err(invalid(format!(
                "image height and width must be positive multiples of 32, got {}×{}",
                shape[2], shape[3]
            )));
        }
        Ok(())
    }

    /// Shared-trunk pyramid of `image` entering through `domain`'s stem.
    pub fn invariant_encode(&self, g: &mut Graph, image: Var, domain: Domain) -> Result<Vec<Var>> {
        self.check_input(g, image)?;
        let s = encoder::stem(g, &self.params, domain.stem_group(), image);
        Ok(encoder::trunk(g, &self.params, "shared_encoder", &self.schedule, s))
    }

    pub fn private_encode(&self, g: &mut Graph, image: Var, domain: Domain) -> Result<Vec<Var>> {
        self.check_input(g, image)?;
        let p = domain.private_group();
        let s = encoder::stem(g, &self.params, &format!("{p}.stem"), image);
        Ok(encoder::trunk(g, &self.params, p, &self.schedule, s))
    }

    fn check_pyramid(&self, g: &Graph, pyramid: &[Var]) -> Result<()> {
        if pyramid.len() != 5 {
            return Err(invalid(format!("pyramid must have 5 levels, got {}", pyramid.len())));
        }
        let (n, _, h0, w0) = g.value(pyramid[0]).dims4();
        for (i, &v) in pyramid.iter().enumerate() {
            let (nn, c, h, w) = g.value(v).dims4();
            let want = (n, self.schedule.encoder_channels[i], h0 >> i, w0 >> i);
            if (nn, c, h, w) != want {
                return Err(invalid(format!(
                    "pyramid level {i} is {:?}, expected {want:?}",
                    g.shape(v)
                )));
            }
        }
        Ok(())
    }

    /// Disparities at scales `0..num_scales`; scale `s` has stride `2^s`.
    pub fn decode_depth(&self, g: &mut Graph, pyramid: &[Var]) -> Result<Vec<Var>> {
        self.check_pyramid(g, pyramid)?;
        let scales: Vec<usize> = (0..self.config.num_scales).collect();
        Ok(decoder::decoder(g, &self.params, "depth_decoder", pyramid, &scales))
    }

    /// Image reconstruction from the level-wise sum of private and
    /// invariant features.
    pub fn reconstruct(&self, g: &mut Graph, private: &[Var], invariant: &[Var], domain: Domain) -> Result<Var> {
        self.check_pyramid(g, private)?;
        self.check_pyramid(g, invariant)?;
        if g.shape(private[0]) != g.shape(invariant[0]) {
            return Err(invalid("private and invariant pyramids differ in shape"));
        }
        let summed: Vec<Var> = private.iter().zip(invariant).map(|(&p, &i)| g.add(p, i)).collect();
        let out = decoder::decoder(g, &self.params, domain.recon_group(), &summed, &[0]);
        Ok(out[0])
    }

    /// `(N,6)` pose vector of the transform from `a`'s camera to `b`'s.
    pub fn pose_vector(&self, g: &mut Graph, a: Var, b: Var) -> Result<Var> {
        if g.shape(a) != g.shape(b) {
            return Err(invalid(format!(
                "pose inputs differ in shape: {:?} vs {:?}",
                g.shape(a),
                g.shape(b)
            )));
        }
        if g.shape(a).len() != 4 || g.shape(a)[1] != 3 {
            return Err(invalid("pose inputs must be N×3×H×W"));
        }
        Ok(pose::pose_net(g, &self.params, self.schedule.pose_channels.len(), a, b))
    }

    pub fn reduce(&self, g: &mut Graph, f: Var, domain: Domain, invariant: bool, level: usize) -> Result<Var> {
        crate::losses::reduce_features(g, &self.params, f, domain.reducer(invariant), level)
    }

    /// Inference-mode helpers on plain `3×H×W` tensors.
    pub fn encode_tensor(&self, image: &Tensor, domain: Domain, invariant: bool) -> Result<FeaturePyramid> {
        let mut g = Graph::inference();
        let x = g.constant(batch_one(image)?);
        let p = if invariant {
            self.invariant_encode(&mut g, x, domain)?
        } else {
            self.private_encode(&mut g, x, domain)?
        };
        Ok(FeaturePyramid::from_graph(&g, &p))
    }

    pub fn decode_depth_tensor(&self, pyramid: &FeaturePyramid) -> Result<Vec<Tensor>> {
        let mut g = Graph::inference();
        let vars: Vec<Var> = pyramid.levels.iter().map(|t| g.constant(t.clone())).collect();
        let d = self.decode_depth(&mut g, &vars)?;
        Ok(d.iter().map(|&v| g.value(v).clone()).collect())
    }

    pub fn reconstruct_tensor(&self, private: &FeaturePyramid, invariant: &FeaturePyramid, domain: Domain) -> Result<Tensor> {
        let mut g = Graph::inference();
        let p: Vec<Var> = private.levels.iter().map(|t| g.constant(t.clone())).collect();
        let i: Vec<Var> = invariant.levels.iter().map(|t| g.constant(t.clone())).collect();
        let r = self.reconstruct(&mut g, &p, &i, domain)?;
        Ok(g.value(r).clone())
    }

    /// Rigid transform from `frame_a`'s camera to `frame_b`'s.
    pub fn estimate_pose(&self, frame_a: &Tensor, frame_b: &Tensor) -> Result<PoseSE3> {
        if frame_a.shape() != frame_b.shape() {
            return Err(invalid("pose inputs differ in shape"));
        }
        let mut g = Graph::inference();
        let a = g.constant(batch_one(frame_a)?);
        let b = g.constant(batch_one(frame_b)?);
        let v = self.pose_vector(&mut g, a, b)?;
        let d = g.value(v).data();
        Ok(pose_vector_to_se3([d[0], d[1], d[2]], [d[3], d[4], d[5]], false))
    }

    /// Sets every scalar of a parameter group to `value`.
    pub fn fill_group(&mut self, group: &str, value: f64) {
        for name in self.params.group_names(group) {
            self.params.get_mut(&name).expect("listed parameter").data_mut().fill(value);
        }
    }
}

fn batch_one(image: &Tensor) -> Result<Tensor> {
    match image.ndim() {
        3 => Ok(image.reshape(&[1, image.shape()[0], image.shape()[1], image.shape()[2]])),
        4 => Ok(image.clone()),
        _ => Err(invalid(format!("expected a 3×H×W image, got {:?}", image.shape()))),
    }
}
