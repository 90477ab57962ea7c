use serde::{Deserialize, Serialize};

use crate::error::{AddsError, Result};
use crate::losses::REDUCED_CHANNELS;

/// Encoder layer schedule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderDepth {
    /// 18-layer residual network: channels 64/64/128/256/512, two blocks
    /// per stage.
    #[default]
    Resnet18,
    /// Same topology at a width and depth small enough for one CPU core.
    Tiny,
}

/// Channel and block counts derived from an [`EncoderDepth`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    /// Stem output followed by the four residual stages.
    pub encoder_channels: [usize; 5],
    pub blocks: [usize; 4],
    pub decoder_channels: [usize; 5],
    pub pose_channels: Vec<usize>,
}

impl EncoderDepth {
    pub fn schedule(&self) -> Schedule {
        match self {
            EncoderDepth::Resnet18 => Schedule {
                encoder_channels: [64, 64, 128, 256, 512],
                blocks: [2, 2, 2, 2],
                decoder_channels: [16, 32, 64, 128, 256],
                pose_channels: vec![16, 32, 64, 128, 256, 256, 256],
            },
            EncoderDepth::Tiny => Schedule {
                encoder_channels: [8, 8, 16, 32, 64],
                blocks: [1, 1, 1, 1],
                decoder_channels: [8, 8, 16, 16, 32],
                pose_channels: vec![8, 16, 32, 32, 32],
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub encoder_depth: EncoderDepth,
    pub num_scales: usize,
    /// Reduced channel count of the orthogonality reducers.
    pub cr: usize,
    /// Apply orthogonality at every pyramid level instead of the deepest.
    pub ortho_all_scales: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            encoder_depth: EncoderDepth::Resnet18,
            num_scales: 4,
            cr: REDUCED_CHANNELS,
            ortho_all_scales: false,
        }
    }
}

impl NetworkConfig {
    pub fn tiny() -> Self {
        NetworkConfig {
            encoder_depth: EncoderDepth::Tiny,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.num_scales) {
            return Err(AddsError::Config(format!("num_scales must be in 1..=4, got {}", self.num_scales)));
        }
        if self.cr == 0 {
            return Err(AddsError::Config("cr must be at least 1".into()));
        }
        Ok(())
    }

    /// Pyramid levels that carry orthogonality reducers.
    pub fn ortho_levels(&self) -> Vec<usize> {
        if self.ortho_all_scales {
            (0..5).collect()
        } else {
            vec![4]
        }
    }
}
