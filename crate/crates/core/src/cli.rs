//! `adds` command line: `synth`, `train`, `eval` and `infer`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{
    load_rgb, preprocess, read_split, resize, save_depth_map, write_synthetic_dataset, Dataset, SceneConfig,
    SynthOptions, RAW_HEIGHT, RAW_WIDTH,
};
use crate::error::{AddsError, Result};
use crate::eval::{evaluate_split, export_feature_maps};
use crate::network::Domain;
use crate::trainer::{fit, infer, Checkpoint, TrainConfig, FINAL_CHECKPOINT, LOG_FILE};

pub const DETERMINISTIC_ENV: &str = "ADDS_DETERMINISTIC";

#[derive(Parser, Debug)]
#[command(name = "adds", version, about = "Day/night self-supervised depth estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic paired day/night dataset with ground truth.
    Synth(SynthArgs),
    /// Train from a JSON run configuration.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split.
    Eval(EvalArgs),
    /// Predict depth for one image.
    Infer(InferArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    sequences: usize,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = crate::data::MODEL_HEIGHT)]
    height: usize,
    #[arg(long, default_value_t = crate::data::MODEL_WIDTH)]
    width: usize,
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    ablation: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Comma-separated depth caps in meters.
    #[arg(long, default_value = "40,60")]
    caps: String,
    #[arg(long, default_value = "day")]
    domain: String,
    /// Dataset root; defaults to the directory above the split's folder.
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Metrics CSV; defaults to `metrics_<domain>.csv` next to the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    domain: String,
    /// 16-bit millimeter depth PNG.
    #[arg(long)]
    out: PathBuf,
    /// Export the top-k deepest feature maps of each extractor.
    #[arg(long)]
    features: Option<usize>,
    /// Directory for feature maps; defaults to the output's directory.
    #[arg(long)]
    features_dir: Option<PathBuf>,
}

/// JSON run document. Relative split paths are resolved against
/// `data_root`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub train: TrainConfig,
    pub data_root: PathBuf,
    #[serde(default = "default_train_split")]
    pub train_split: PathBuf,
    #[serde(default)]
    pub eval_split: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub deterministic: bool,
}

fn default_train_split() -> PathBuf {
    PathBuf::from("splits/train.txt")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AddsError::Config(format!("run configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AddsError::io(path, e))?;
        let mut cfg = RunConfig::from_json(&text)?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| AddsError::Config(e.to_string()))?;
        if v.pointer("/train/seed").is_none() && !deterministic_env() && !cfg.deterministic {
            cfg.train.seed = rand::random();
        }
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_root.join(p)
        }
    }

    /// Every violated constraint, including missing inputs.
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.train.violations();
        if !self.data_root.is_dir() {
            v.push(format!("data_root {} is not a directory", self.data_root.display()));
        }
        let splits = std::iter::once(&self.train_split).chain(self.eval_split.as_ref());
        for s in splits {
            let p = self.resolve(s);
            if !p.is_file() {
                v.push(format!("split file {} does not exist", p.display()));
            }
        }
        if self.output_dir.exists() && !self.output_dir.is_dir() {
            v.push(format!("output_dir {} is not a directory", self.output_dir.display()));
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

/// Whether `ADDS_DETERMINISTIC=1` is set.
pub fn deterministic_env() -> bool {
    std::env::var(DETERMINISTIC_ENV).is_ok_and(|v| v == "1")
}

/// `E_CODE: message` on a single line.
pub fn error_line(e: &AddsError) -> String {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("{}: {msg}", e.code())
}

fn parse_domain(s: &str) -> Result<Domain> {
    s.parse()
        .map_err(|_| AddsError::Usage(format!("unknown domain `{s}` (expected day or night)")))
}

fn parse_caps(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(|| AddsError::Usage(format!("bad depth cap `{c}`")))
        })
        .collect()
}

/// Parses `args` (program name first) and runs the command, writing
/// human-readable output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{e}");
            return Ok(());
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return Err(AddsError::Usage(first.to_string()));
        }
    };
    match cli.command {
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Infer(a) => cmd_infer(&a, out),
    }
}

fn say(out: &mut dyn Write, line: String) {
    let _ = writeln!(out, "{line}");
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let opts = SynthOptions {
        sequences: a.sequences,
        frames: a.frames,
        seed: a.seed,
        scene: SceneConfig::sized(a.height, a.width),
    };
    let s = write_synthetic_dataset(&a.out, &opts)?;
    let split = read_split(&a.out.join("splits").join("eval.txt"))?;
    let mismatches = crate::data::audit_split(&a.out, &split)?;
    say(
        out,
        format!(
            "wrote {} day, {} night, {} gt images; {} train / {} eval records; pairing mismatches: {mismatches}",
            s.day_images, s.night_images, s.gt_images, s.train_records, s.eval_records
        ),
    );
    Ok(())
}

/// Loads and validates a run configuration and applies flag overrides.
fn train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(r) = &a.data_root {
        cfg.data_root = r.clone();
    }
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(ab) = &a.ablation {
        cfg.train.ablation = ab.parse()?;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(m) = a.max_steps {
        cfg.train.max_steps = Some(m);
    }
    cfg.deterministic |= deterministic_env();
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = train_config(a)?;
    let split = read_split(&cfg.resolve(&cfg.train_split))?;
    let ds = Dataset::load(&cfg.data_root, &split, cfg.train.image_height, cfg.train.image_width)?;
    say(
        out,
        format!(
            "training {} on {} samples (seed {}, deterministic {})",
            cfg.train.ablation,
            ds.len(),
            cfg.train.seed,
            cfg.deterministic
        ),
    );
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| AddsError::io(&cfg.output_dir, e))?;
    let snapshot = cfg.output_dir.join("run_config.json");
    let json = serde_json::to_string_pretty(&cfg).map_err(|e| AddsError::Format(e.to_string()))?;
    std::fs::write(&snapshot, json).map_err(|e| AddsError::io(&snapshot, e))?;
    let outcome = fit(&ds, &cfg.train, Some(&cfg.output_dir))?;
    let last = outcome.log.last().map(|r| r.losses.total).unwrap_or(f64::NAN);
    say(
        out,
        format!(
            "{} steps, final total {last:e}; log {}, checkpoint {}",
            outcome.trainer.step,
            cfg.output_dir.join(LOG_FILE).display(),
            cfg.output_dir.join(FINAL_CHECKPOINT).display()
        ),
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let domain = parse_domain(&a.domain)?;
    let caps = parse_caps(&a.caps)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.model()?;
    let split = read_split(&a.split)?;
    let root = match &a.data_root {
        Some(r) => r.clone(),
        None => a
            .split
            .parent()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .ok_or_else(|| AddsError::Usage("cannot infer the dataset root; pass --data-root".into()))?,
    };
    let report = evaluate_split(
        &model,
        &root,
        &split,
        domain,
        &caps,
        ck.config.image_height,
        ck.config.image_width,
    )?;
    let csv_path = a.out.clone().unwrap_or_else(|| {
        a.checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join(format!("metrics_{}.csv", domain.as_str()))
    });
    report.write_csv(&csv_path)?;
    let _ = write!(out, "{}", report.summary_table());
    say(out, format!("metrics written to {}", csv_path.display()));
    Ok(())
}

fn cmd_infer(a: &InferArgs, out: &mut dyn Write) -> Result<()> {
    let domain = parse_domain(&a.domain)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.model()?;
    let raw = load_rgb(&a.image)?;
    let (h, w) = (ck.config.image_height, ck.config.image_width);
    let image = if raw.shape()[1..] == [RAW_HEIGHT, RAW_WIDTH] {
        resize(&preprocess(&raw)?, h, w)
    } else {
        resize(&raw, h, w)
    };
    let depth = infer(&image, domain, &model)?;
    save_depth_map(&depth, &a.out)?;
    say(out, format!("depth written to {}", a.out.display()));
    if let Some(k) = a.features {
        let dir = a
            .features_dir
            .clone()
            .unwrap_or_else(|| a.out.parent().unwrap_or(Path::new(".")).to_path_buf());
        let id = a.image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        let paths = export_feature_maps(&model, &image, domain, k, id, &dir)?;
        say(out, format!("{} feature maps written to {}", paths.len(), dir.display()));
    }
    Ok(())
}
