//! Evaluation metrics: image fidelity (MSE/PSNR), classification accuracy,
//! multiple-object-tracking accuracy, and the gate confusion report. All
//! metrics reduce at f64 and are pure functions.

use crate::error::{MopeError, Result};
use crate::router::{ExpertKind, GateDecision};
use crate::tensor::Tensor;

/// Mean squared error over all elements.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(MopeError::Shape(format!(
            "mse: left {} vs right {}",
            a.shape(),
            b.shape()
        )));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.numel() as f64)
}

/// Peak signal-to-noise ratio in dB; +inf when the tensors are identical.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / e).log10())
}

/// Fraction of rows whose argmax matches the label; ties break to the
/// lowest class index. Logits arrive as (n, classes, 1, 1) or any tensor
/// with `classes` values per sample.
pub fn classification_accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let n = logits.shape().n;
    if n != labels.len() {
        return Err(MopeError::Shape(format!(
            "accuracy: {} logit rows vs {} labels",
            n,
            labels.len()
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let per = logits.numel() / n;
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits.data()[i * per..(i + 1) * per];
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

/// Per-frame tracking error counts.
#[derive(Debug, Clone, Default)]
pub struct TrackingCounts {
    pub false_negatives: Vec<u64>,
    pub false_positives: Vec<u64>,
    pub id_switches: Vec<u64>,
    pub ground_truths: Vec<u64>,
}

impl TrackingCounts {
    /// Parse the fixture CSV: header `frame,fn,fp,id,g`, one row per frame.
    pub fn from_csv(text: &str) -> Result<TrackingCounts> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| MopeError::Parse("tracking CSV is empty".into()))?;
        let normalized: Vec<String> = header
            .split(',')
            .map(|s| s.trim().to_ascii_lowercase())
            .collect();
        if normalized != ["frame", "fn", "fp", "id", "g"] {
            return Err(MopeError::Parse(format!(
                "tracking CSV header must be frame,fn,fp,id,g; got {header:?}"
            )));
        }
        let mut counts = TrackingCounts::default();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(MopeError::Parse(format!(
                    "tracking CSV line {} has {} fields, expected 5",
                    lineno + 2,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<u64> {
                s.parse()
                    .map_err(|_| MopeError::Parse(format!("bad count {s:?} on line {}", lineno + 2)))
            };
            counts.false_negatives.push(parse(fields[1])?);
            counts.false_positives.push(parse(fields[2])?);
            counts.id_switches.push(parse(fields[3])?);
            counts.ground_truths.push(parse(fields[4])?);
        }
        Ok(counts)
    }
}

/// Multiple-object-tracking accuracy:
/// 1 - (sum of false negatives + false positives + ID switches) / (sum of
/// ground truths). Unbounded below; the ground-truth total must be positive.
pub fn mota(counts: &TrackingCounts) -> Result<f64> {
    let g: u64 = counts.ground_truths.iter().sum();
    if g == 0 {
        return Err(MopeError::InvalidArgument(
            "mota: total ground-truth count must be positive".into(),
        ));
    }
    let errors: u64 = counts.false_negatives.iter().sum::<u64>()
        + counts.false_positives.iter().sum::<u64>()
        + counts.id_switches.iter().sum::<u64>();
    Ok(1.0 - errors as f64 / g as f64)
}

/// Binary confusion of gate decisions against clean/noisy ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GateReport {
    /// clean image routed as clean (identity)
    pub clean_correct: usize,
    /// clean image sent to a noisy expert
    pub clean_wrong: usize,
    /// noisy image sent to a noisy expert
    pub noisy_correct: usize,
    /// noisy image routed as clean
    pub noisy_wrong: usize,
}

impl GateReport {
    pub fn accuracy(&self) -> f64 {
        let total = self.clean_correct + self.clean_wrong + self.noisy_correct + self.noisy_wrong;
        if total == 0 {
            return 0.0;
        }
        (self.clean_correct + self.noisy_correct) as f64 / total as f64
    }
}

/// Tally decisions against labels (`true` = clean).
pub fn gate_report(decisions: &[GateDecision], truly_clean: &[bool]) -> Result<GateReport> {
    if decisions.len() != truly_clean.len() {
        return Err(MopeError::Shape(format!(
            "gate_report: {} decisions vs {} labels",
            decisions.len(),
            truly_clean.len()
        )));
    }
    let mut report = GateReport::default();
    for (d, &clean) in decisions.iter().zip(truly_clean) {
        let routed_clean = d.chosen_expert == ExpertKind::Identity;
        match (clean, routed_clean) {
            (true, true) => report.clean_correct += 1,
            (true, false) => report.clean_wrong += 1,
            (false, false) => report.noisy_correct += 1,
            (false, true) => report.noisy_wrong += 1,
        }
    }
    Ok(report)
}
