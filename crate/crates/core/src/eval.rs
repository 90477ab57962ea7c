//! Depth metrics, median scaling, split evaluation and feature-map export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use adds_autograd::{resize_bilinear_tensor, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::{save_gray, DatasetLayout, FrameId, GroundTruthDepth};
use crate::error::{invalid, AddsError, Result};
use crate::geometry::DepthMap;
use crate::network::{Domain, Model};

pub const MIN_EVAL_DEPTH: f64 = 0.1;
pub const DEFAULT_CAPS: [f64; 2] = [40.0, 60.0];
pub const REPORT_COLUMNS: [&str; 9] = ["image_id", "cap", "abs_rel", "sq_rel", "rmse", "rmse_log", "a1", "a2", "a3"];
/// `image_id` of aggregate rows in the CSV report.
pub const AGGREGATE_ID: &str = "mean";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub n_pixels: usize,
    pub cap: f64,
}

impl DepthMetrics {
    pub fn values(&self) -> [f64; 7] {
        [self.abs_rel, self.sq_rel, self.rmse, self.rmse_log, self.a1, self.a2, self.a3]
    }

    /// Unweighted mean over images; `n_pixels` is summed.
    pub fn mean(items: &[DepthMetrics]) -> Result<DepthMetrics> {
        let Some(first) = items.first() else {
            return Err(AddsError::DegenerateInput("no metrics to aggregate".into()));
        };
        let k = items.len() as f64;
        let mut acc = [0.0; 7];
        for m in items {
            for (a, v) in acc.iter_mut().zip(m.values()) {
                *a += v;
            }
        }
        let [abs_rel, sq_rel, rmse, rmse_log, a1, a2, a3] = acc.map(|a| a / k);
        Ok(DepthMetrics {
            abs_rel,
            sq_rel,
            rmse,
            rmse_log,
            a1,
            a2,
            a3,
            n_pixels: items.iter().map(|m| m.n_pixels).sum(),
            cap: first.cap,
        })
    }
}

fn check_shapes(pred: &DepthMap, gt: &GroundTruthDepth) -> Result<()> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(invalid(format!(
            "prediction {}×{} and ground truth {}×{} differ",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scales `pred` by `median(gt) / median(pred)` over valid ground-truth
/// pixels. Returns the scaled map and the ratio.
pub fn median_scale(pred: &DepthMap, gt: &GroundTruthDepth) -> Result<(DepthMap, f64)> {
    check_shapes(pred, gt)?;
    let (g, p): (Vec<f64>, Vec<f64>) = gt
        .values
        .data()
        .iter()
        .zip(pred.values().data())
        .filter(|(&g, _)| g > 0.0)
        .map(|(&g, &p)| (g, p))
        .unzip();
    if g.is_empty() {
        return Err(AddsError::DegenerateInput("ground truth has no valid pixels".into()));
    }
    let ratio = median(g) / median(p);
    if !ratio.is_finite() || ratio <= 0.0 {
        return Err(AddsError::DegenerateInput(format!("median scale ratio {ratio}")));
    }
    Ok((DepthMap::new(pred.values().map(|v| v * ratio))?, ratio))
}

/// Metrics over valid pixels with `gt ≤ cap`; predictions are clamped to
/// `[MIN_EVAL_DEPTH, cap]`.
pub fn compute_metrics(pred: &DepthMap, gt: &GroundTruthDepth, cap: f64) -> Result<DepthMetrics> {
    check_shapes(pred, gt)?;
    if !(cap > MIN_EVAL_DEPTH) {
        return Err(invalid(format!("cap {cap} must exceed {MIN_EVAL_DEPTH}")));
    }
    let mut s = [0.0; 7];
    let mut n = 0usize;
    for (&g, &p) in gt.values.data().iter().zip(pred.values().data()) {
        if !(g > 0.0 && g <= cap) {
            continue;
        }
        let p = p.clamp(MIN_EVAL_DEPTH, cap);
        let d = p - g;
        let ratio = (p / g).max(g / p);
        s[0] += d.abs() / g;
        s[1] += d * d / g;
        s[2] += d * d;
        s[3] += (p.ln() - g.ln()).powi(2);
        s[4] += f64::from(u8::from(ratio < 1.25));
        s[5] += f64::from(u8::from(ratio < 1.25 * 1.25));
        s[6] += f64::from(u8::from(ratio < 1.25 * 1.25 * 1.25));
        n += 1;
    }
    if n == 0 {
        return Err(AddsError::DegenerateInput(format!("no valid ground truth within {cap} m")));
    }
    let k = n as f64;
    Ok(DepthMetrics {
        abs_rel: s[0] / k,
        sq_rel: s[1] / k,
        rmse: (s[2] / k).sqrt(),
        rmse_log: (s[3] / k).sqrt(),
        a1: s[4] / k,
        a2: s[5] / k,
        a3: s[6] / k,
        n_pixels: n,
        cap,
    })
}

/// Median-scaled metrics of one prediction at one cap. Scaling uses the
/// pixels that enter the metrics.
pub fn evaluate_image(pred: &DepthMap, gt: &GroundTruthDepth, cap: f64) -> Result<DepthMetrics> {
    let capped = GroundTruthDepth::new(gt.values.map(|g| if g <= cap { g } else { 0.0 }))?;
    let (scaled, _) = median_scale(pred, &capped)?;
    compute_metrics(&scaled, &capped, cap)
}

/// Per-image and aggregate metrics of one split.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub caps: Vec<f64>,
    /// `(image_id, metrics)` for every evaluated image and cap.
    pub per_image: Vec<(String, DepthMetrics)>,
    /// One aggregate per cap, in cap order.
    pub aggregates: Vec<DepthMetrics>,
    pub skipped: Vec<String>,
}

impl EvalReport {
    pub fn aggregate(&self, cap: f64) -> Option<&DepthMetrics> {
        self.aggregates.iter().find(|m| m.cap == cap)
    }

    pub fn to_csv(&self) -> String {
        let mut wr = csv::Writer::from_writer(Vec::new());
        wr.write_record(REPORT_COLUMNS).expect("in-memory write");
        let rows = self
            .per_image
            .iter()
            .map(|(id, m)| (id.as_str(), m))
            .chain(self.aggregates.iter().map(|m| (AGGREGATE_ID, m)));
        for (id, m) in rows {
            let mut rec = vec![id.to_string(), format!("{}", m.cap)];
            rec.extend(m.values().iter().map(|v| format!("{v:e}")));
            wr.write_record(rec).expect("in-memory write");
        }
        String::from_utf8(wr.into_inner().expect("flush")).expect("ascii")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| AddsError::io(dir, e))?;
        }
        std::fs::write(path, self.to_csv()).map_err(|e| AddsError::io(path, e))
    }

    /// Fixed-width table of the aggregates.
    pub fn summary_table(&self) -> String {
        let mut s = format!(
            "{:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "cap", "abs_rel", "sq_rel", "rmse", "rmse_log", "a1", "a2", "a3"
        );
        for m in &self.aggregates {
            let _ = write!(s, "{:>6}", m.cap);
            for v in m.values() {
                let _ = write!(s, " {v:>8.4}");
            }
            s.push('\n');
        }
        s
    }
}

/// Reads the aggregate rows back from a report written by
/// [`EvalReport::to_csv`]. `n_pixels` is not stored and reads as 0.
pub fn parse_report_aggregates(text: &str) -> Result<Vec<DepthMetrics>> {
    let bad = |m: String| AddsError::Format(format!("metrics report: {m}"));
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(REPORT_COLUMNS) {
        return Err(bad(format!("unexpected columns {header:?}")));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if &rec[0] != AGGREGATE_ID {
            continue;
        }
        let mut v = [0.0; 8];
        for (i, x) in v.iter_mut().enumerate() {
            *x = rec[i + 1].parse().map_err(|_| bad(format!("bad number `{}`", &rec[i + 1])))?;
        }
        out.push(DepthMetrics {
            cap: v[0],
            abs_rel: v[1],
            sq_rel: v[2],
            rmse: v[3],
            rmse_log: v[4],
            a1: v[5],
            a2: v[6],
            a3: v[7],
            n_pixels: 0,
        });
    }
    Ok(out)
}

/// One image to evaluate. Frames without ground truth are skipped.
pub struct EvalItem {
    pub id: String,
    pub image: Tensor,
    pub gt: Option<GroundTruthDepth>,
}

/// Evaluates any depth predictor over `items`. Predictions whose size
/// differs from the ground truth are resized bilinearly to it.
pub fn evaluate_items<F>(items: &[EvalItem], caps: &[f64], mut predict: F) -> Result<EvalReport>
where
    F: FnMut(&Tensor) -> Result<DepthMap>,
{
    if items.is_empty() {
        return Err(invalid("evaluation split is empty"));
    }
    if caps.is_empty() {
        return Err(invalid("no depth caps given"));
    }
    let mut per_cap: Vec<Vec<DepthMetrics>> = vec![Vec::new(); caps.len()];
    let mut report = EvalReport {
        caps: caps.to_vec(),
        per_image: Vec::new(),
        aggregates: Vec::new(),
        skipped: Vec::new(),
    };
    for item in items {
        let Some(gt) = &item.gt else {
            log::warn!("skipping {}: no ground truth", item.id);
            report.skipped.push(item.id.clone());
            continue;
        };
        let gt = gt.cropped_like_images()?;
        let mut pred = predict(&item.image)?;
        if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
            let v = pred.values().reshape(&[1, 1, pred.height(), pred.width()]);
            pred = DepthMap::new(resize_bilinear_tensor(&v, gt.height(), gt.width()).reshape(&[gt.height(), gt.width()]))?;
        }
        for (k, &cap) in caps.iter().enumerate() {
            match evaluate_image(&pred, &gt, cap) {
                Ok(m) => {
                    per_cap[k].push(m);
                    report.per_image.push((item.id.clone(), m));
                }
                Err(AddsError::DegenerateInput(msg)) => {
                    log::warn!("skipping {} at cap {cap}: {msg}", item.id);
                }
                Err(e) => return Err(e),
            }
        }
    }
    for ms in &per_cap {
        if ms.is_empty() {
            return Err(AddsError::DegenerateInput("every image was skipped".into()));
        }
        report.aggregates.push(DepthMetrics::mean(ms)?);
    }
    Ok(report)
}

/// Loads the split's centre frames of `domain` at `height × width` and
/// evaluates `model` against their ground truth.
pub fn evaluate_split(
    model: &Model,
    root: &Path,
    split: &[FrameId],
    domain: Domain,
    caps: &[f64],
    height: usize,
    width: usize,
) -> Result<EvalReport> {
    let layout = DatasetLayout::new(root);
    let mut items = Vec::with_capacity(split.len());
    for f in split {
        let gt_path = layout.gt_path(f);
        let gt = if gt_path.exists() {
            Some(layout.load_gt(f)?)
        } else {
            None
        };
        items.push(EvalItem {
            id: f.to_string(),
            image: layout.load_frame(domain, f, height, width)?,
            gt,
        });
    }
    evaluate_items(&items, caps, |img| crate::trainer::infer(img, domain, model))
}

/// Feature extractor whose maps are exported.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extractor {
    Private,
    Invariant,
}

impl Extractor {
    pub fn as_str(&self) -> &'static str {
        match self {
            Extractor::Private => "private",
            Extractor::Invariant => "invariant",
        }
    }
}

/// Channel indices of a `(1,C,H,W)` or `C×H×W` feature ranked by
/// `Σ|activation|`, largest first; ties keep channel order.
pub fn rank_channels(feature: &Tensor) -> Vec<(usize, f64)> {
    let s = feature.shape();
    let (c, hw) = (s[s.len() - 3], s[s.len() - 2] * s[s.len() - 1]);
    let mut e: Vec<(usize, f64)> = (0..c)
        .map(|i| (i, feature.data()[i * hw..(i + 1) * hw].iter().map(|v| v.abs()).sum()))
        .collect();
    e.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    e
}

/// Min-max normalization to `[0, 1]`; a constant map becomes zeros.
pub fn normalize_map(map: &Tensor) -> Tensor {
    let lo = map.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        map.map(|v| (v - lo) / (hi - lo))
    } else {
        map.map(|_| 0.0)
    }
}

/// Top-`k` deepest-scale maps of each extractor, normalized, as
/// `(extractor, rank, H×W map)` with 1-based ranks.
pub fn top_feature_maps(model: &Model, image: &Tensor, domain: Domain, k: usize) -> Result<Vec<(Extractor, usize, Tensor)>> {
    let mut out = Vec::new();
    for ex in [Extractor::Private, Extractor::Invariant] {
        let pyr = model.encode_tensor(image, domain, ex == Extractor::Invariant)?;
        let f = pyr.deepest();
        let (_, c, h, w) = f.dims4();
        if k > c {
            return Err(invalid(format!("k = {k} exceeds the {c} available channels")));
        }
        for (rank, (ch, _)) in rank_channels(f).into_iter().take(k).enumerate() {
            let m = Tensor::new(&[h, w], f.data()[ch * h * w..(ch + 1) * h * w].to_vec());
            out.push((ex, rank + 1, normalize_map(&m)));
        }
    }
    Ok(out)
}

/// Writes `<image_id>_<domain>-<extractor>_<rank>.png` for the top-`k` maps
/// of both extractors and returns the paths.
pub fn export_feature_maps(
    model: &Model,
    image: &Tensor,
    domain: Domain,
    k: usize,
    image_id: &str,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (ex, rank, map) in top_feature_maps(model, image, domain, k)? {
        let p = out_dir.join(format!("{image_id}_{}-{}_{rank:02}.png", domain.as_str(), ex.as_str()));
        save_gray(&map, &p)?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(values: Vec<f64>) -> GroundTruthDepth {
        GroundTruthDepth::new(Tensor::new(&[1, values.len()], values)).unwrap()
    }

    fn pred(values: Vec<f64>) -> DepthMap {
        DepthMap::new(Tensor::new(&[1, values.len()], values)).unwrap()
    }

    #[test]
    fn closed_form_metrics() {
        let m = compute_metrics(&pred(vec![20.0; 4]), &gt(vec![10.0; 4]), 40.0).unwrap();
        assert!((m.abs_rel - 1.0).abs() < 1e-12);
        assert!((m.sq_rel - 10.0).abs() < 1e-12);
        assert!((m.rmse - 10.0).abs() < 1e-12);
        assert!((m.rmse_log - 2f64.ln()).abs() < 1e-12);
        assert_eq!((m.a1, m.a2, m.a3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn median_of_even_count() {
        let (s, r) = median_scale(&pred(vec![1.0, 2.0, 3.0, 4.0]), &gt(vec![2.0, 4.0, 6.0, 8.0])).unwrap();
        assert_eq!(r, 2.0);
        assert_eq!(s.values().data(), &[2.0, 4.0, 6.0, 8.0]);
        assert!(matches!(
            median_scale(&pred(vec![1.0]), &gt(vec![0.0])),
            Err(AddsError::DegenerateInput(_))
        ));
    }

    #[test]
    fn zero_channel_ranks_last() {
        let f = Tensor::from_fn(&[3, 2, 2], |i| if i < 4 { 0.0 } else { -(i as f64) });
        let r = rank_channels(&f);
        assert_eq!(r.last().unwrap().0, 0);
        assert_eq!(r[0].0, 2);
    }
}
