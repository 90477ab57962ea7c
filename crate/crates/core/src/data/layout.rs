//! On-disk dataset layout, split files and paired triplet loading.
//!
//! ```text
//! root/intrinsics.json
//! root/day/<sequence>/<index:06>.png
//! root/night/<sequence>/<index:06>.png
//! root/gt/<sequence>/<index:06>.png
//! root/splits/<name>.txt          "<sequence> <index>" per line
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{AddsError, Result};
use crate::geometry::CameraIntrinsics;
use crate::network::Domain;

use super::io::{load_gt_depth, load_rgb};
use super::preprocess::{preprocess_intrinsics, preprocess_to};
use super::{GroundTruthDepth, ImageTriplet, PairedSample};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameId {
    pub sequence: String,
    pub index: usize,
}

impl FrameId {
    pub fn new(sequence: impl Into<String>, index: usize) -> Self {
        FrameId {
            sequence: sequence.into(),
            index,
        }
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{:06}", self.sequence, self.index)
    }
}

#[derive(Clone, Debug)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetLayout { root: root.into() }
    }

    pub fn image_path(&self, domain: Domain, frame: &FrameId) -> PathBuf {
        self.root
            .join(domain.as_str())
            .join(&frame.sequence)
            .join(format!("{:06}.png", frame.index))
    }

    pub fn gt_path(&self, frame: &FrameId) -> PathBuf {
        self.root.join("gt").join(&frame.sequence).join(format!("{:06}.png", frame.index))
    }

    pub fn intrinsics_path(&self) -> PathBuf {
        self.root.join("intrinsics.json")
    }

    pub fn split_path(&self, name: &str) -> PathBuf {
        self.root.join("splits").join(format!("{name}.txt"))
    }

    /// Intrinsics of the stored images.
    pub fn read_intrinsics(&self) -> Result<CameraIntrinsics> {
        let path = self.intrinsics_path();
        let text = std::fs::read_to_string(&path).map_err(|e| AddsError::io(&path, e))?;
        let k: CameraIntrinsics =
            serde_json::from_str(&text).map_err(|e| AddsError::Format(format!("{}: {e}", path.display())))?;
        k.validate()?;
        Ok(k)
    }

    pub fn write_intrinsics(&self, k: &CameraIntrinsics) -> Result<()> {
        let path = self.intrinsics_path();
        std::fs::create_dir_all(&self.root).map_err(|e| AddsError::io(&self.root, e))?;
        let text = serde_json::to_string_pretty(k).expect("intrinsics serialize");
        std::fs::write(&path, text + "\n").map_err(|e| AddsError::io(&path, e))
    }

    pub fn load_frame(&self, domain: Domain, frame: &FrameId, height: usize, width: usize) -> Result<adds_autograd::Tensor> {
        let raw = load_rgb(&self.image_path(domain, frame))?;
        preprocess_to(&raw, height, width)
    }

    pub fn load_gt(&self, frame: &FrameId) -> Result<GroundTruthDepth> {
        load_gt_depth(&self.gt_path(frame))
    }

    /// Frames `t−1, t, t+1` of `sequence` in both domains, preprocessed to
    /// `height × width`.
    pub fn load_paired_triplet(&self, sequence: &str, t: usize, height: usize, width: usize) -> Result<PairedSample> {
        if t == 0 {
            return Err(AddsError::Sequence(format!(
                "{sequence}: frame 0 has no predecessor, triplets need t ≥ 1"
            )));
        }
        let k = preprocess_intrinsics(&self.read_intrinsics()?, height, width)?;
        let load = |domain: Domain| -> Result<ImageTriplet> {
            let mut frames = Vec::with_capacity(3);
            for i in t - 1..=t + 1 {
                frames.push(self.load_frame(domain, &FrameId::new(sequence, i), height, width)?);
            }
            let [a, b, c]: [adds_autograd::Tensor; 3] = frames.try_into().expect("three frames");
            ImageTriplet::new([a, b, c], domain, k, sequence, t)
        };
        PairedSample::new(load(Domain::Day)?, load(Domain::Night)?)
    }
}

/// Parses `"<sequence> <index>"` records; blank lines are skipped.
pub fn parse_split(text: &str) -> Result<Vec<FrameId>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(seq), Some(idx), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(AddsError::Format(format!("split line {}: expected `<sequence> <index>`", n + 1)));
        };
        let index = idx
            .parse()
            .map_err(|_| AddsError::Format(format!("split line {}: bad index `{idx}`", n + 1)))?;
        out.push(FrameId::new(seq, index));
    }
    Ok(out)
}

pub fn read_split(path: &Path) -> Result<Vec<FrameId>> {
    let text = std::fs::read_to_string(path).map_err(|e| AddsError::io(path, e))?;
    parse_split(&text)
}

pub fn write_split(path: &Path, frames: &[FrameId]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| AddsError::io(dir, e))?;
    }
    let text: String = frames.iter().map(|f| format!("{} {}\n", f.sequence, f.index)).collect();
    std::fs::write(path, text).map_err(|e| AddsError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_round_trip() {
        let frames = parse_split("seq000 1\n\nseq001 12\n").unwrap();
        assert_eq!(frames, vec![FrameId::new("seq000", 1), FrameId::new("seq001", 12)]);
        assert!(parse_split("seq000\n").is_err());
        assert!(parse_split("seq000 x\n").is_err());
        assert_eq!(FrameId::new("s", 7).to_string(), "s_000007");
    }
}
