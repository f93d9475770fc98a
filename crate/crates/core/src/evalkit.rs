//! Trajectory and pose-error metrics, plus the sparsity-degradation sweep.
//!
//! ATE follows the overlapping-snippet protocol: each window of
//! `snippet_len` consecutive poses is re-anchored to its first frame, a
//! single positive scale is fit to the predicted snippet (monocular scale
//! freedom), and the RMSE of corresponding points is reported per window.
//! RPE compares per-frame motions directly: translational distance in
//! scene units and the relative rotation angle in radians.

use crate::dataio::sig9;
use crate::geometry::{so3_exp, EgoMotion, Pose};
use crate::mfg::{MfgError, MfgModel, TrainSample};
use crate::CameraModel;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectory lengths differ: {pred} vs {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("need at least {need} frames, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("snippet length must be at least 2, got {0}")]
    BadSnippet(usize),
}

/// Snippet evaluation options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AteOptions {
    pub snippet_len: usize,
}

impl Default for AteOptions {
    fn default() -> Self {
        Self { snippet_len: 5 }
    }
}

/// Mean, standard deviation and the underlying per-item values.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl MetricReport {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            values,
        }
    }
}

/// Absolute trajectory error over overlapping snippets.
pub fn ate(pred: &[Pose], gt: &[Pose], opts: &AteOptions) -> Result<MetricReport, EvalError> {
    if opts.snippet_len < 2 {
        return Err(EvalError::BadSnippet(opts.snippet_len));
    }
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if pred.len() < opts.snippet_len {
        return Err(EvalError::TooShort {
            need: opts.snippet_len,
            got: pred.len(),
        });
    }
    let len = opts.snippet_len;
    let mut values = Vec::with_capacity(pred.len() - len + 1);
    for start in 0..=pred.len() - len {
        let p0 = pred[start].translation;
        let g0 = gt[start].translation;
        let mut dot = 0.0;
        let mut norm = 0.0;
        for i in 0..len {
            let p = pred[start + i].translation - p0;
            let g = gt[start + i].translation - g0;
            dot += p.dot(&g);
            norm += p.norm_squared();
        }
        let scale = if norm > 1e-30 && dot > 0.0 { dot / norm } else { 1.0 };
        let mut sq = 0.0;
        for i in 0..len {
            let p = pred[start + i].translation - p0;
            let g = gt[start + i].translation - g0;
            sq += (p * scale - g).norm_squared();
        }
        values.push((sq / len as f64).sqrt());
    }
    Ok(MetricReport::from_values(values))
}

/// Relative pose error of per-frame motions:
/// `(translation report, rotation report)`.
pub fn rpe(
    pred: &[EgoMotion],
    gt: &[EgoMotion],
) -> Result<(MetricReport, MetricReport), EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::TooShort { need: 1, got: 0 });
    }
    let mut trans = Vec::with_capacity(pred.len());
    let mut rot = Vec::with_capacity(pred.len());
    for (p, g) in pred.iter().zip(gt) {
        trans.push((p.translation - g.translation).norm());
        let rel = so3_exp(p.rotation) * so3_exp(g.rotation).transpose();
        let angle = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        rot.push(angle);
    }
    Ok((
        MetricReport::from_values(trans),
        MetricReport::from_values(rot),
    ))
}

/// One row of the sparsity sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub keep_percent: f64,
    /// Mean over the dataset of `|t_hat - t| + |w_hat - w|`.
    pub error: f64,
}

/// Egomotion error of the model over a dataset as a function of the
/// top-k percentage of hidden neurons kept at inference. `k = 100`
/// reproduces the unmasked evaluation exactly.
pub fn sparsity_sweep(
    model: &MfgModel,
    cam: &CameraModel,
    samples: &[TrainSample],
    ks: &[f64],
) -> Result<Vec<SweepRow>, MfgError> {
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut total = 0.0;
        for s in samples {
            let ego = model.predict_egomotion(&s.flow, Some(k), cam)?;
            total += (ego.translation - s.gt.translation).norm()
                + (ego.rotation - s.gt.rotation).norm();
        }
        rows.push(SweepRow {
            keep_percent: k,
            error: total / samples.len().max(1) as f64,
        });
    }
    Ok(rows)
}

/// CSV with one line per snippet: `snippet_index,value`.
pub fn write_metric_csv(
    mut w: impl std::io::Write,
    value_name: &str,
    report: &MetricReport,
) -> std::io::Result<()> {
    writeln!(w, "snippet_index,{value_name}")?;
    for (i, v) in report.values.iter().enumerate() {
        writeln!(w, "{i},{}", sig9(*v))?;
    }
    Ok(())
}

/// CSV with one line per sweep row: `keep_percent,error`.
pub fn write_sweep_csv(mut w: impl std::io::Write, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "keep_percent,error")?;
    for row in rows {
        writeln!(w, "{},{}", row.keep_percent, sig9(row.error))?;
    }
    Ok(())
}
