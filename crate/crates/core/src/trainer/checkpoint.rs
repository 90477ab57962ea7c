//! Binary checkpoint: `ADDSCKPT`, a little-endian `u32` format version, a
//! `u64` header length, a JSON header, then every tensor as little-endian
//! `f64` in header order.

use std::path::Path;

use adds_autograd::{Adam, ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{AddsError, Result};
use crate::network::Model;

use super::config::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ADDSCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TensorKind {
    Param,
    Buffer,
    AdamM,
    AdamV,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    kind: TensorKind,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: TrainConfig,
    epoch: usize,
    step: usize,
    batch_in_epoch: usize,
    optimizer: OptimizerHeader,
    tensors: Vec<TensorEntry>,
}

/// Everything needed to continue training or to run inference.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: usize,
    /// Batches of the next epoch already consumed.
    pub batch_in_epoch: usize,
    pub params: ParamStore,
    pub optimizer: Adam,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model> {
        Model::from_params(self.config.network.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors: Vec<(TensorEntry, &Tensor)> = Vec::new();
        for (name, t) in self.params.iter() {
            tensors.push((entry(name, TensorKind::Param, t), t));
        }
        for (name, t) in self.params.buffers() {
            tensors.push((entry(name, TensorKind::Buffer, t), t));
        }
        for (name, t) in &self.optimizer.first_moment {
            tensors.push((entry(name, TensorKind::AdamM, t), t));
        }
        for (name, t) in &self.optimizer.second_moment {
            tensors.push((entry(name, TensorKind::AdamV, t), t));
        }
        let o = &self.optimizer;
        let (entries, data): (Vec<TensorEntry>, Vec<&Tensor>) = tensors.into_iter().unzip();
        let header = Header {
            config: self.config.clone(),
            epoch: self.epoch,
            step: self.step,
            batch_in_epoch: self.batch_in_epoch,
            optimizer: OptimizerHeader {
                lr: o.lr,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                step: o.step,
            },
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).map_err(|e| AddsError::Format(e.to_string()))?;
        let total: usize = data.iter().map(|t| t.numel()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * total);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in data {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| AddsError::Format(format!("checkpoint: {m}"));
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(fmt("missing ADDSCKPT magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(AddsError::Version(format!(
                "checkpoint format {version}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..).ok_or_else(|| fmt("truncated"))?;
        let json = body.get(..hlen).ok_or_else(|| fmt("truncated header"))?;
        let header: Header = serde_json::from_slice(json)
            .map_err(|e| AddsError::Version(format!("checkpoint header does not match this build: {e}")))?;
        header.config.validate().map_err(|e| AddsError::Version(format!("stored configuration: {e}")))?;
        let mut data = &body[hlen..];
        let mut params = ParamStore::new();
        let o = &header.optimizer;
        let mut optimizer = Adam::new(o.lr, o.beta1, o.beta2);
        optimizer.eps = o.eps;
        optimizer.step = o.step;
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            if data.len() < 8 * n {
                return Err(fmt("truncated tensor data"));
            }
            let values = data[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            data = &data[8 * n..];
            let t = Tensor::new(&e.shape, values);
            match e.kind {
                TensorKind::Param => params.insert(e.name, t),
                TensorKind::Buffer => params.insert_buffer(e.name, t),
                TensorKind::AdamM => {
                    optimizer.first_moment.insert(e.name, t);
                }
                TensorKind::AdamV => {
                    optimizer.second_moment.insert(e.name, t);
                }
            }
        }
        if !data.is_empty() {
            return Err(fmt("trailing bytes"));
        }
        let ck = Checkpoint {
            config: header.config,
            epoch: header.epoch,
            step: header.step,
            batch_in_epoch: header.batch_in_epoch,
            params,
            optimizer,
        };
        ck.model()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| AddsError::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| AddsError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| AddsError::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn entry(name: &str, kind: TensorKind, t: &Tensor) -> TensorEntry {
    TensorEntry {
        name: name.to_string(),
        kind,
        shape: t.shape().to_vec(),
    }
}
