//! Standard depth-evaluation metrics with median scaling and range capping.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{DepthMap, Mask};
use crate::sampling::median;

pub const MIN_DEPTH: f64 = 1e-3;
pub const KITTI_CAP: f64 = 80.0;
pub const DDAD_CAP: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub median_scale: bool,
    pub cap: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            median_scale: true,
            cap: KITTI_CAP,
        }
    }
}

impl EvalOptions {
    pub fn ddad() -> Self {
        Self {
            cap: DDAD_CAP,
            ..Self::default()
        }
    }

    pub fn unscaled(mut self) -> Self {
        self.median_scale = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_valid: usize,
    pub scale_applied: f64,
}

impl MetricReport {
    pub const CSV_FIELDS: [&'static str; 9] = [
        "abs_rel",
        "sq_rel",
        "rmse",
        "rmse_log",
        "delta1",
        "delta2",
        "delta3",
        "n_valid",
        "scale_applied",
    ];

    pub fn csv_values(&self) -> Vec<String> {
        let mut v: Vec<String> = [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
        .iter()
        .map(|x| format!("{x:.9}"))
        .collect();
        v.push(self.n_valid.to_string());
        v.push(format!("{:.9}", self.scale_applied));
        v
    }

    /// Pixel-weighted mean of several reports.
    pub fn aggregate(reports: &[MetricReport]) -> Option<MetricReport> {
        let n: usize = reports.iter().map(|r| r.n_valid).sum();
        if n == 0 {
            return None;
        }
        let w = |f: fn(&MetricReport) -> f64| {
            reports.iter().map(|r| f(r) * r.n_valid as f64).sum::<f64>() / n as f64
        };
        Some(MetricReport {
            abs_rel: w(|r| r.abs_rel),
            sq_rel: w(|r| r.sq_rel),
            rmse: w(|r| r.rmse * r.rmse).sqrt(),
            rmse_log: w(|r| r.rmse_log * r.rmse_log).sqrt(),
            delta1: w(|r| r.delta1),
            delta2: w(|r| r.delta2),
            delta3: w(|r| r.delta3),
            n_valid: n,
            scale_applied: w(|r| r.scale_applied),
        })
    }
}

/// Metrics over plain slices of paired depths.
pub fn evaluate_values(pred: &[f64], gt: &[f64], options: &EvalOptions) -> Result<MetricReport> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} ground-truth values",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::NoValidPixels);
    }
    if !(options.cap > MIN_DEPTH) {
        return Err(Error::InvalidArgument(format!("cap {} too small", options.cap)));
    }
    let scale = if options.median_scale {
        let mg = median(gt).ok_or(Error::NoValidPixels)?;
        let mp = median(pred).ok_or(Error::NoValidPixels)?;
        mg / mp
    } else {
        1.0
    };
    let clip = |d: f64| d.clamp(MIN_DEPTH, options.cap);
    let n = pred.len() as f64;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut deltas = [0usize; 3];
    for (&p, &g) in pred.iter().zip(gt) {
        let p = clip(p * scale);
        let g = clip(g);
        let diff = g - p;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        sq_log += (g.ln() - p.ln()).powi(2);
        let thresh = (g / p).max(p / g);
        for (k, t) in [1.25, 1.25f64.powi(2), 1.25f64.powi(3)].iter().enumerate() {
            if thresh < *t {
                deltas[k] += 1;
            }
        }
    }
    Ok(MetricReport {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        delta1: deltas[0] as f64 / n,
        delta2: deltas[1] as f64 / n,
        delta3: deltas[2] as f64 / n,
        n_valid: pred.len(),
        scale_applied: scale,
    })
}

/// Evaluates `pred` against `gt` on the pixels selected by `mask` (all
/// pixels when `None`).
pub fn evaluate(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>, options: &EvalOptions) -> Result<MetricReport> {
    if !pred.values.same_shape(&gt.values) {
        return Err(Error::ShapeMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    if let Some(m) = mask {
        if m.width != gt.width() || m.height != gt.height() {
            return Err(Error::ShapeMismatch("mask does not match depth".into()));
        }
    }
    let (p, g): (Vec<f64>, Vec<f64>) = pred
        .values
        .data
        .iter()
        .zip(&gt.values.data)
        .enumerate()
        .filter(|(i, (_, &g))| g > 0.0 && mask.map_or(true, |m| m.data[*i]))
        .map(|(_, (&p, &g))| (p, g))
        .unzip();
    evaluate_values(&p, &g, options)
}
