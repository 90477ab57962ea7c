//! Optimization loop, ablation ladder, checkpoints and the depth inference
//! path.

mod checkpoint;
mod config;
mod step;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use adds_autograd::{Adam, Graph, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ablation_config, AblationConfig, AblationId, LrSchedule, PmPolicy, TrainConfig};
pub use step::{forward_backward, forward_disparity, Batch, DomainBatch, StepOutput};

use crate::data::{Dataset, ImageTriplet};
use crate::error::{invalid, AddsError, Result};
use crate::geometry::{disparity_to_depth, DepthMap, DisparityMap, DEFAULT_MAX_DEPTH, DEFAULT_MIN_DEPTH};
use crate::losses::LossBundle;
use crate::network::{Domain, Model};

pub const LOG_COLUMNS: [&str; 9] = ["step", "epoch", "lr", "recons", "simi", "ortho_f", "ortho_g", "pm", "total"];

/// One logged optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub losses: LossBundle,
}

impl LogRow {
    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let b = &self.losses;
        vec![
            self.step.to_string(),
            self.epoch.to_string(),
            format!("{:e}", self.lr),
            opt(b.recons),
            opt(b.simi),
            opt(b.ortho_f),
            opt(b.ortho_g),
            opt(b.photometric),
            format!("{:e}", b.total),
        ]
    }
}

/// Writes log rows as CSV, with a header line when `header` is set.
pub fn write_log_csv<W: Write>(w: W, rows: &[LogRow], header: bool) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| AddsError::Format(format!("training log: {e}"));
    if header {
        wr.write_record(LOG_COLUMNS).map_err(csv_err)?;
    }
    for r in rows {
        wr.write_record(r.record()).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| AddsError::Format(format!("training log: {e}")))?;
    Ok(())
}

pub fn log_to_csv(rows: &[LogRow]) -> String {
    let mut buf = Vec::new();
    write_log_csv(&mut buf, rows, true).expect("in-memory write");
    String::from_utf8(buf).expect("ascii")
}

/// Parses a training log written by [`write_log_csv`]; empty fields are
/// disabled terms.
pub fn parse_log_csv(text: &str) -> Result<Vec<LogRow>> {
    let bad = |m: String| AddsError::Format(format!("training log: {m}"));
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(LOG_COLUMNS) {
        return Err(bad(format!("unexpected columns {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let f = |i: usize| -> Result<Option<f64>> {
            let s = &rec[i];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(format!("bad number `{s}`")))
            }
        };
        let int = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(format!("bad integer `{}`", &rec[i])));
        rows.push(LogRow {
            step: int(0)?,
            epoch: int(1)?,
            lr: f(2)?.ok_or_else(|| bad("missing lr".into()))?,
            losses: LossBundle {
                recons: f(3)?,
                simi: f(4)?,
                ortho_f: f(5)?,
                ortho_g: f(6)?,
                photometric: f(7)?,
                total: f(8)?.ok_or_else(|| bad("missing total".into()))?,
            },
        });
    }
    Ok(rows)
}

/// Model, optimizer and progress counters of one training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub optimizer: Adam,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: usize,
    /// Batches of epoch `epoch + 1` already consumed.
    pub batch_in_epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::new(config.network.clone(), config.seed)?;
        let (b1, b2) = config.betas;
        Ok(Trainer {
            model,
            optimizer: Adam::new(config.lr_schedule.lr_at(1), b1, b2),
            config,
            epoch: 0,
            step: 0,
            batch_in_epoch: 0,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let model = ck.model()?;
        Ok(Trainer {
            model,
            optimizer: ck.optimizer,
            config: ck.config,
            epoch: ck.epoch,
            step: ck.step,
            batch_in_epoch: ck.batch_in_epoch,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            epoch: self.epoch,
            step: self.step,
            batch_in_epoch: self.batch_in_epoch,
            params: self.model.params.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    /// Forward, backward and one optimizer update on the total loss.
    pub fn train_step(&mut self, batch: &Batch) -> Result<LossBundle> {
        let out = forward_backward(&self.model, batch, &self.config)?;
        self.optimizer.update(&mut self.model.params, &out.gradients);
        for (name, value) in out.buffer_updates {
            self.model.params.set_buffer(&name, value);
        }
        self.step += 1;
        Ok(out.bundle)
    }

    /// `(day, night)` sample indices of every batch of `epoch` (1-based).
    /// Unpaired rungs take each night triplet from another position of the
    /// dataset.
    pub fn epoch_batches(&self, n: usize, epoch: usize) -> Vec<Vec<(usize, usize)>> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let paired = self.config.ablation_config().paired;
        let shift = (n / 2).max(1);
        let pairs: Vec<(usize, usize)> = order
            .iter()
            .map(|&i| (i, if paired { i } else { (i + shift) % n }))
            .collect();
        pairs.chunks(self.config.batch_size).map(<[_]>::to_vec).collect()
    }

    fn max_steps_reached(&self) -> bool {
        self.config.max_steps.is_some_and(|m| self.step >= m)
    }

    /// Runs the remainder of the current epoch, appending to `log`. Returns
    /// `false` when the step budget stopped it early.
    pub fn run_epoch(&mut self, dataset: &Dataset, log: &mut Vec<LogRow>) -> Result<bool> {
        let epoch = self.epoch + 1;
        self.optimizer.lr = self.config.lr_schedule.lr_at(epoch);
        let batches = self.epoch_batches(dataset.len(), epoch);
        for b in batches.iter().skip(self.batch_in_epoch) {
            if self.max_steps_reached() {
                return Ok(false);
            }
            let day: Vec<&ImageTriplet> = b.iter().map(|&(d, _)| &dataset.samples[d].day).collect();
            let night: Vec<&ImageTriplet> = b.iter().map(|&(_, n)| &dataset.samples[n].night).collect();
            let batch = Batch::from_triplets(&day, &night)?;
            let losses = self.train_step(&batch)?;
            self.batch_in_epoch += 1;
            log.push(LogRow {
                step: self.step,
                epoch,
                lr: self.optimizer.lr,
                losses,
            });
        }
        self.epoch = epoch;
        self.batch_in_epoch = 0;
        Ok(true)
    }
}

/// Result of [`fit`] or [`resume`].
pub struct FitOutcome {
    pub trainer: Trainer,
    pub log: Vec<LogRow>,
    /// One checkpoint per completed epoch.
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: Option<PathBuf>,
}

pub const LOG_FILE: &str = "train_log.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub fn epoch_checkpoint_path(out: &Path, epoch: usize) -> PathBuf {
    out.join("checkpoints").join(format!("epoch_{epoch:03}.ckpt"))
}

/// Trains from scratch. With `out`, writes a checkpoint per completed epoch,
/// `final.ckpt` and `train_log.csv`.
pub fn fit(dataset: &Dataset, config: &TrainConfig, out: Option<&Path>) -> Result<FitOutcome> {
    run(dataset, Trainer::new(config.clone())?, out, true)
}

/// Continues a run from a checkpoint, appending to an existing log.
pub fn resume(dataset: &Dataset, checkpoint: Checkpoint, out: Option<&Path>) -> Result<FitOutcome> {
    run(dataset, Trainer::from_checkpoint(checkpoint)?, out, false)
}

fn run(dataset: &Dataset, mut trainer: Trainer, out: Option<&Path>, fresh: bool) -> Result<FitOutcome> {
    if dataset.is_empty() {
        return Err(invalid("training dataset is empty"));
    }
    let (h, w) = (trainer.config.image_height, trainer.config.image_width);
    if let Some(s) = dataset.samples.iter().find(|s| (s.day.height(), s.day.width()) != (h, w)) {
        return Err(invalid(format!(
            "sample {} is {}×{}, configuration expects {h}×{w}",
            s.id(),
            s.day.height(),
            s.day.width()
        )));
    }
    let mut log = Vec::new();
    let mut checkpoints = Vec::new();
    let mut logged = 0;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| AddsError::io(dir, e))?;
        if fresh {
            let p = dir.join(LOG_FILE);
            write_log_csv(std::fs::File::create(&p).map_err(|e| AddsError::io(&p, e))?, &[], true)?;
        }
    }
    while trainer.epoch < trainer.config.epochs {
        let complete = trainer.run_epoch(dataset, &mut log)?;
        if let Some(dir) = out {
            let p = dir.join(LOG_FILE);
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&p)
                .map_err(|e| AddsError::io(&p, e))?;
            write_log_csv(f, &log[logged..], false)?;
            logged = log.len();
            if complete {
                let p = epoch_checkpoint_path(dir, trainer.epoch);
                trainer.checkpoint().save(&p)?;
                checkpoints.push(p);
            }
        }
        if !complete {
            break;
        }
    }
    let mut final_checkpoint = None;
    if let Some(dir) = out {
        let p = dir.join(FINAL_CHECKPOINT);
        trainer.checkpoint().save(&p)?;
        final_checkpoint = Some(p);
    }
    Ok(FitOutcome {
        trainer,
        log,
        checkpoints,
        final_checkpoint,
    })
}

/// Depth of a preprocessed `3×H×W` image through `domain`'s stem, the
/// shared trunk and the depth decoder, nothing else.
pub fn infer(image: &Tensor, domain: Domain, model: &Model) -> Result<DepthMap> {
    let disp = infer_disparity(image, domain, model)?;
    disparity_to_depth(&disp, DEFAULT_MIN_DEPTH, DEFAULT_MAX_DEPTH)
}

pub fn infer_disparity(image: &Tensor, domain: Domain, model: &Model) -> Result<DisparityMap> {
    if image.ndim() != 3 {
        return Err(invalid(format!("expected a 3×H×W image, got {:?}", image.shape())));
    }
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let mut g = Graph::inference();
    let x = g.constant(image.reshape(&[1, c, h, w]));
    let d = forward_disparity(&mut g, model, x, domain)?;
    DisparityMap::new(g.value(d).reshape(&[h, w]), 0)
}

/// [`infer`] with the domain given by name.
pub fn infer_named(image: &Tensor, domain: &str, model: &Model) -> Result<DepthMap> {
    infer(image, domain.parse()?, model)
}
