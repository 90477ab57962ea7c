//! Paired day/night triplets, preprocessing, ground truth and synthetic
//! scenes.

mod io;
mod layout;
mod preprocess;
mod relight;
mod synth;

use std::path::Path;

use adds_autograd::Tensor;
use serde::{Deserialize, Serialize};

pub use io::{load_gt_depth, load_rgb, save_depth_map, save_depth_mm, save_gray, save_gt_depth, save_rgb};
pub use layout::{parse_split, read_split, write_split, DatasetLayout, FrameId};
pub use preprocess::{
    center_crop, preprocess, preprocess_intrinsics, preprocess_to, resize, CROP_HEIGHT, CROP_TOP, MODEL_HEIGHT,
    MODEL_WIDTH, RAW_HEIGHT, RAW_WIDTH,
};
pub use relight::{relight_night, relight_night_with, LightBlob, NightStyle, NIGHT_GAMMA, NIGHT_NOISE_STD};
pub use synth::{generate_synthetic_scene, generate_synthetic_scene_with, render_wall, SceneConfig, SyntheticSequence};

use crate::error::{invalid, AddsError, Result};
use crate::geometry::CameraIntrinsics;
use crate::network::Domain;

/// Frames `t−1, t, t+1` of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTriplet {
    pub frames: [Tensor; 3],
    pub domain: Domain,
    pub intrinsics: CameraIntrinsics,
    pub sequence: String,
    pub t: usize,
}

impl ImageTriplet {
    pub fn new(
        frames: [Tensor; 3],
        domain: Domain,
        intrinsics: CameraIntrinsics,
        sequence: impl Into<String>,
        t: usize,
    ) -> Result<Self> {
        let s = frames[0].shape().to_vec();
        if s.len() != 3 || s[0] != 3 {
            return Err(invalid(format!("frames must be 3×H×W, got {s:?}")));
        }
        if frames.iter().any(|f| f.shape() != s.as_slice()) {
            return Err(invalid("triplet frames differ in shape"));
        }
        if (intrinsics.height, intrinsics.width) != (s[1], s[2]) {
            return Err(invalid("intrinsics do not match the frame size"));
        }
        if t == 0 {
            return Err(AddsError::Sequence("triplet centre index must be at least 1".into()));
        }
        Ok(ImageTriplet {
            frames,
            domain,
            intrinsics,
            sequence: sequence.into(),
            t,
        })
    }

    pub fn previous(&self) -> &Tensor {
        &self.frames[0]
    }

    pub fn target(&self) -> &Tensor {
        &self.frames[1]
    }

    pub fn next(&self) -> &Tensor {
        &self.frames[2]
    }

    pub fn height(&self) -> usize {
        self.frames[0].shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames[0].shape()[2]
    }
}

/// A day triplet and its night counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub day: ImageTriplet,
    pub night: ImageTriplet,
}

impl PairedSample {
    pub fn new(day: ImageTriplet, night: ImageTriplet) -> Result<Self> {
        if day.sequence != night.sequence || day.t != night.t {
            return Err(AddsError::Sequence(format!(
                "day {}@{} paired with night {}@{}",
                day.sequence, day.t, night.sequence, night.t
            )));
        }
        if day.domain != Domain::Day || night.domain != Domain::Night {
            return Err(invalid("paired sample domains must be day and night"));
        }
        if day.frames[0].shape() != night.frames[0].shape() {
            return Err(invalid("day and night frames differ in shape"));
        }
        Ok(PairedSample { day, night })
    }

    pub fn id(&self) -> FrameId {
        FrameId::new(self.day.sequence.clone(), self.day.t)
    }
}

/// Metric depth with `0` marking pixels without a measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthDepth {
    pub values: Tensor,
}

impl GroundTruthDepth {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.ndim() != 2 {
            return Err(invalid(format!("ground truth must be H×W, got {:?}", values.shape())));
        }
        if values.data().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("ground truth must be finite and non-negative"));
        }
        Ok(GroundTruthDepth { values })
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.values.data()[i] > 0.0
    }

    pub fn valid_mask(&self) -> Tensor {
        self.values.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn valid_count(&self) -> usize {
        self.values.data().iter().filter(|&&v| v > 0.0).count()
    }

    /// Raw `960×1280` ground truth cropped like the images; anything else
    /// passes through.
    pub fn cropped_like_images(&self) -> Result<Self> {
        if (self.height(), self.width()) != (RAW_HEIGHT, RAW_WIDTH) {
            return Ok(self.clone());
        }
        let c = center_crop(&self.values.reshape(&[1, RAW_HEIGHT, RAW_WIDTH]))?;
        GroundTruthDepth::new(c.reshape(&[CROP_HEIGHT, RAW_WIDTH]))
    }
}

/// Training samples plus the ground truth of each sample's centre frame.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub samples: Vec<PairedSample>,
    pub ground_truth: Vec<Option<GroundTruthDepth>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Loads every split record as a paired triplet at `height × width`.
    pub fn load(root: &Path, split: &[FrameId], height: usize, width: usize) -> Result<Dataset> {
        let layout = DatasetLayout::new(root);
        let mut ds = Dataset::default();
        for f in split {
            ds.samples.push(layout.load_paired_triplet(&f.sequence, f.index, height, width)?);
            let gt = layout.gt_path(f);
            ds.ground_truth.push(if gt.exists() { Some(layout.load_gt(f)?) } else { None });
        }
        Ok(ds)
    }

    /// Number of samples whose day and night halves disagree on sequence or
    /// frame index.
    pub fn pairing_mismatches(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.day.sequence != s.night.sequence || s.day.t != s.night.t)
            .count()
    }

    /// Builds a synthetic dataset in memory.
    pub fn synthetic(opts: &SynthOptions) -> Result<Dataset> {
        let mut ds = Dataset::default();
        for seq in generate_sequences(opts)? {
            for t in 1..seq.day.len() - 1 {
                let day = seq.day.triplet(&seq.name, t)?;
                let night = ImageTriplet::new(
                    [seq.night[t - 1].clone(), seq.night[t].clone(), seq.night[t + 1].clone()],
                    Domain::Night,
                    seq.day.intrinsics,
                    seq.name.clone(),
                    t,
                )?;
                ds.samples.push(PairedSample::new(day, night)?);
                ds.ground_truth.push(Some(seq.day.depths[t].clone()));
            }
        }
        Ok(ds)
    }
}

/// Parameters of a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthOptions {
    pub sequences: usize,
    pub frames: usize,
    pub seed: u64,
    pub scene: SceneConfig,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            sequences: 2,
            frames: 10,
            seed: 0,
            scene: SceneConfig::default(),
        }
    }
}

/// One rendered sequence and its night counterpart.
#[derive(Clone, Debug)]
pub struct GeneratedSequence {
    pub name: String,
    pub day: SyntheticSequence,
    pub night: Vec<Tensor>,
}

fn sequence_seed(seed: u64, s: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(s as u64 * 0xD1B5_4A32_D192_ED03 + 1)
}

pub fn generate_sequences(opts: &SynthOptions) -> Result<Vec<GeneratedSequence>> {
    if opts.sequences == 0 {
        return Err(invalid("at least one sequence is required"));
    }
    (0..opts.sequences)
        .map(|s| {
            let seed = sequence_seed(opts.seed, s);
            let day = generate_synthetic_scene_with(seed, opts.frames, &opts.scene)?;
            let style = NightStyle::from_seed(seed ^ 0x4E49_4748_54);
            let night = day
                .frames
                .iter()
                .enumerate()
                .map(|(i, f)| relight_night_with(f, &style, seed.wrapping_add(1000 + i as u64)))
                .collect();
            Ok(GeneratedSequence {
                name: format!("seq{s:03}"),
                day,
                night,
            })
        })
        .collect()
}

/// Counts of files written by [`write_synthetic_dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthSummary {
    pub day_images: usize,
    pub night_images: usize,
    pub gt_images: usize,
    pub train_records: usize,
    pub eval_records: usize,
}

/// Writes a synthetic dataset in the standard layout with `splits/train.txt`
/// (frames with both neighbours) and `splits/eval.txt` (every frame).
pub fn write_synthetic_dataset(root: &Path, opts: &SynthOptions) -> Result<SynthSummary> {
    let layout = DatasetLayout::new(root);
    let seqs = generate_sequences(opts)?;
    layout.write_intrinsics(&opts.scene.intrinsics())?;
    let mut train = Vec::new();
    let mut eval = Vec::new();
    let mut n = 0;
    for seq in &seqs {
        for i in 0..seq.day.len() {
            let id = FrameId::new(seq.name.clone(), i);
            save_rgb(&seq.day.frames[i], &layout.image_path(Domain::Day, &id))?;
            save_rgb(&seq.night[i], &layout.image_path(Domain::Night, &id))?;
            save_gt_depth(&seq.day.depths[i], &layout.gt_path(&id))?;
            n += 1;
            if i > 0 && i + 1 < seq.day.len() {
                train.push(id.clone());
            }
            eval.push(id);
        }
    }
    write_split(&layout.split_path("train"), &train)?;
    write_split(&layout.split_path("eval"), &eval)?;
    Ok(SynthSummary {
        day_images: n,
        night_images: n,
        gt_images: n,
        train_records: train.len(),
        eval_records: eval.len(),
    })
}

/// Number of split records whose day and night files do not both exist
/// with equal dimensions.
pub fn audit_split(root: &Path, split: &[FrameId]) -> Result<usize> {
    let layout = DatasetLayout::new(root);
    let mut bad = 0;
    for f in split {
        let d = layout.image_path(Domain::Day, f);
        let n = layout.image_path(Domain::Night, f);
        let ok = match (image::image_dimensions(&d), image::image_dimensions(&n)) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        };
        if !ok {
            log::warn!("unpaired record {f}");
            bad += 1;
        }
    }
    Ok(bad)
}
