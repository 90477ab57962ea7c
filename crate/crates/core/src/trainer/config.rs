use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AddsError, Result};
use crate::geometry::{DEFAULT_MAX_DEPTH, DEFAULT_MIN_DEPTH};
use crate::losses::{EnabledLosses, LossWeights, OrthoMode, ReconsSign};
use crate::network::NetworkConfig;

/// Rungs of the ablation ladder, each enabling a superset of the previous.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AblationId {
    U,
    P,
    PR,
    PRF,
    PRFG,
    #[default]
    PRFGS,
}

impl AblationId {
    pub const ALL: [AblationId; 6] = [
        AblationId::U,
        AblationId::P,
        AblationId::PR,
        AblationId::PRF,
        AblationId::PRFG,
        AblationId::PRFGS,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AblationId::U => "U",
            AblationId::P => "P",
            AblationId::PR => "PR",
            AblationId::PRF => "PRF",
            AblationId::PRFG => "PRFG",
            AblationId::PRFGS => "PRFGS",
        }
    }

    pub fn config(&self) -> AblationConfig {
        let rung = AblationId::ALL.iter().position(|a| a == self).expect("listed");
        AblationConfig {
            paired: rung >= 1,
            losses: EnabledLosses {
                photometric: true,
                recons: rung >= 2,
                ortho_f: rung >= 3,
                ortho_g: rung >= 4,
                simi: rung >= 5,
            },
        }
    }
}

impl fmt::Display for AblationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationId {
    type Err = AddsError;

    fn from_str(s: &str) -> Result<Self> {
        AblationId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| AddsError::Config(format!("unknown ablation id `{s}` (expected U, P, PR, PRF, PRFG or PRFGS)")))
    }
}

/// Input pairing and active loss terms of one ablation rung.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub paired: bool,
    pub losses: EnabledLosses,
}

pub fn ablation_config(id: &str) -> Result<AblationConfig> {
    Ok(id.parse::<AblationId>()?.config())
}

/// Which source frames enter the photometric term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmPolicy {
    /// Both neighbours, per-pixel minimum of the reprojection errors.
    #[default]
    MinReprojection,
    /// Previous frame only, plain masked mean.
    PreviousOnly,
}

/// Step-wise learning rate: `initial` for epochs before `decay_epoch`
/// (1-based), `decayed` from then on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub initial: f64,
    pub decayed: f64,
    pub decay_epoch: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 1e-4,
            decayed: 1e-5,
            decay_epoch: 16,
        }
    }
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            initial: lr,
            decayed: lr,
            decay_epoch: usize::MAX,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.decayed
        } else {
            self.initial
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_schedule: LrSchedule,
    pub betas: (f64, f64),
    pub weights: LossWeights,
    pub ablation: AblationId,
    pub seed: u64,
    /// Informational only; computation always runs on the CPU.
    pub device: String,
    pub network: NetworkConfig,
    pub pm_policy: PmPolicy,
    pub automask: bool,
    /// Weight of the edge-aware disparity smoothness term folded into the
    /// photometric loss; 0 disables it.
    pub smoothness: f64,
    pub recons_sign: ReconsSign,
    pub ortho_mode: OrthoMode,
    pub min_depth: f64,
    pub max_depth: f64,
    pub image_height: usize,
    pub image_width: usize,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 6,
            lr_schedule: LrSchedule::default(),
            betas: (0.9, 0.999),
            weights: LossWeights::default(),
            ablation: AblationId::PRFGS,
            seed: 0,
            device: "cpu".into(),
            network: NetworkConfig::default(),
            pm_policy: PmPolicy::default(),
            automask: false,
            smoothness: 0.0,
            recons_sign: ReconsSign::default(),
            ortho_mode: OrthoMode::default(),
            min_depth: DEFAULT_MIN_DEPTH,
            max_depth: DEFAULT_MAX_DEPTH,
            image_height: crate::data::MODEL_HEIGHT,
            image_width: crate::data::MODEL_WIDTH,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn ablation_config(&self) -> AblationConfig {
        self.ablation.config()
    }

    /// Every violated constraint, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.epochs < 1 {
            v.push("epochs must be at least 1".to_string());
        }
        if self.batch_size < 1 {
            v.push("batch_size must be at least 1".to_string());
        }
        let s = &self.lr_schedule;
        if !(s.initial.is_finite() && s.initial > 0.0 && s.decayed.is_finite() && s.decayed > 0.0) {
            v.push(format!("learning rates must be positive: {s:?}"));
        }
        if s.decay_epoch < 1 {
            v.push("lr_schedule.decay_epoch must be at least 1".to_string());
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            v.push(format!("betas must lie in [0, 1): ({b1}, {b2})"));
        }
        if let Err(e) = self.weights.validate() {
            v.push(e.to_string());
        }
        if let Err(e) = self.network.validate() {
            v.push(e.to_string());
        }
        if !(self.smoothness.is_finite() && self.smoothness >= 0.0) {
            v.push(format!("smoothness must be >= 0, got {}", self.smoothness));
        }
        if !(self.min_depth > 0.0 && self.max_depth > self.min_depth && self.max_depth.is_finite()) {
            v.push(format!(
                "depth range must satisfy 0 < min_depth < max_depth: [{}, {}]",
                self.min_depth, self.max_depth
            ));
        }
        for (name, x) in [("image_height", self.image_height), ("image_width", self.image_width)] {
            if x == 0 || x % 32 != 0 {
                v.push(format!("{name} must be a positive multiple of 32, got {x}"));
            }
        }
        if self.max_steps == Some(0) {
            v.push("max_steps must be at least 1 when set".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(AddsError::Config(v.join("; ")))
        }
    }
}
