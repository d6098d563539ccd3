//! Detector scoring, ROC/accuracy summaries and contour grids.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, Label};
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::float::Float;

/// Linearly interpolated empirical quantile (the "type 7" definition).
/// Returns `None` for an empty slice.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if lo == hi || frac == 0.0 {
        return Some(sorted[lo]);
    }
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDataset<F> {
    pub scores: Vec<F>,
    pub labels: Vec<Label>,
}

/// Decision scores of every row, in order.
pub fn score_dataset<F: Float, D: Detector<F> + ?Sized>(
    model: &D,
    data: &Dataset<F>,
) -> Result<ScoredDataset<F>> {
    let labels = data.labels().ok_or(Error::MissingLabels)?.to_vec();
    if data.n() > 0 && data.d() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: data.d(),
        });
    }
    let scores = data
        .points()
        .iter_rows()
        .map(|x| model.score(x))
        .collect::<Result<_>>()?;
    Ok(ScoredDataset { scores, labels })
}

fn class_counts(labels: &[Label]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|l| l.is_normal()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

fn check_lengths<F>(scores: &[F], labels: &[Label]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    Ok(())
}

/// Area under the ROC curve with normal as the positive class, by the
/// Mann–Whitney rank statistic. Tied scores count one half.
pub fn roc_auc<F: Float>(scores: &[F], labels: &[Label]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].widen().total_cmp(&scores[b].widen()));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k].is_normal() {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let pos_f = pos as f64;
    Ok((rank_sum_pos - pos_f * (pos_f + 1.0) / 2.0) / (pos_f * neg as f64))
}

/// `(TPR, FPR)` for the rule "normal iff score > threshold".
pub fn rates_at<F: Float>(scores: &[F], labels: &[Label], threshold: F) -> Result<(f64, f64)> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (&s, l) in scores.iter().zip(labels) {
        if s > threshold {
            if l.is_normal() {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    Ok((tp as f64 / pos as f64, fp as f64 / neg as f64))
}

/// Mean of the true-positive and true-negative rates.
pub fn balanced_accuracy_at<F: Float>(scores: &[F], labels: &[Label], threshold: F) -> Result<f64> {
    let (tpr, fpr) = rates_at(scores, labels, threshold)?;
    Ok(0.5 * (tpr + 1.0 - fpr))
}

/// Best balanced accuracy over every threshold: below all scores, between
/// each pair of consecutive distinct scores, and above all scores.
pub fn best_threshold_accuracy<F: Float>(scores: &[F], labels: &[Label]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].widen().total_cmp(&scores[b].widen()));

    // threshold below everything: all predicted normal
    let mut best = 0.5;
    let mut neg_below = 0usize;
    let mut pos_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        while i < order.len() && scores[order[i]] == v {
            if labels[order[i]].is_normal() {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
        let tpr = (pos - pos_below) as f64 / pos as f64;
        let tnr = neg_below as f64 / neg as f64;
        let acc = 0.5 * (tpr + tnr);
        if acc > best {
            best = acc;
        }
    }
    Ok(best)
}

/// Summary of one detector on a labelled dataset. Serialized with exactly
/// these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub tpr_at_zero: f64,
    pub fpr_at_zero: f64,
    pub best_threshold_accuracy: Option<f64>,
    pub n_eval: usize,
}

impl EvalReport {
    pub fn balanced_accuracy_at_zero(&self) -> f64 {
        0.5 * (self.tpr_at_zero + 1.0 - self.fpr_at_zero)
    }
}

pub fn evaluate<F: Float, D: Detector<F> + ?Sized>(
    model: &D,
    data: &Dataset<F>,
) -> Result<EvalReport> {
    let scored = score_dataset(model, data)?;
    report_from_scores(&scored.scores, &scored.labels)
}

pub fn report_from_scores<F: Float>(scores: &[F], labels: &[Label]) -> Result<EvalReport> {
    let (tpr, fpr) = rates_at(scores, labels, F::zero())?;
    Ok(EvalReport {
        auc: roc_auc(scores, labels)?,
        tpr_at_zero: tpr,
        fpr_at_zero: fpr,
        best_threshold_accuracy: Some(best_threshold_accuracy(scores, labels)?),
        n_eval: scores.len(),
    })
}

/// Surface values on a regular 2-D grid. `values[iy * resolution + ix]` is
/// the value at `(x_ix, y_iy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionGrid<F> {
    pub x_range: (f64, f64, usize),
    pub y_range: (f64, f64, usize),
    /// `-inf` marks nodes where the log-density underflowed.
    pub values: Vec<F>,
}

fn node(lo: f64, hi: f64, resolution: usize, i: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (resolution - 1) as f64
}

impl<F: Float> DecisionGrid<F> {
    pub fn resolution(&self) -> usize {
        self.x_range.2
    }

    pub fn x(&self, ix: usize) -> f64 {
        node(self.x_range.0, self.x_range.1, self.x_range.2, ix)
    }

    pub fn y(&self, iy: usize) -> f64 {
        node(self.y_range.0, self.y_range.1, self.y_range.2, iy)
    }

    pub fn value(&self, ix: usize, iy: usize) -> F {
        self.values[iy * self.resolution() + ix]
    }

    /// Grid cell `(ix, iy)` whose lower-left node is nearest below `p`, or
    /// `None` outside the grid.
    pub fn cell_of(&self, p: (f64, f64)) -> Option<(usize, usize)> {
        let r = self.resolution();
        let fx = (p.0 - self.x_range.0) / (self.x_range.1 - self.x_range.0) * (r - 1) as f64;
        let fy = (p.1 - self.y_range.0) / (self.y_range.1 - self.y_range.0) * (r - 1) as f64;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= (r - 1) as f64 && fy <= (r - 1) as f64) {
            return None;
        }
        Some(((fx as usize).min(r - 2), (fy as usize).min(r - 2)))
    }

    /// CSV with header `x,y,value`, one row per node, row-major in `y`.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "x,y,value")?;
        let r = self.resolution();
        for iy in 0..r {
            for ix in 0..r {
                let v = self.value(ix, iy).widen();
                if v == f64::NEG_INFINITY {
                    writeln!(sink, "{},{},-inf", self.x(ix), self.y(iy))?;
                } else {
                    writeln!(sink, "{},{},{}", self.x(ix), self.y(iy), v)?;
                }
            }
        }
        Ok(())
    }
}

/// Evaluates the model's surface (decision function for DiGMM, mixture
/// log-density for the baseline) on a `resolution × resolution` grid.
pub fn decision_grid<F: Float, D: Detector<F> + ?Sized>(
    model: &D,
    x_range: (f64, f64),
    y_range: (f64, f64),
    resolution: usize,
) -> Result<DecisionGrid<F>> {
    if model.dim() != 2 {
        return Err(Error::DimensionNotTwo(model.dim()));
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter(
            "grid resolution must be at least 2".into(),
        ));
    }
    if !(x_range.1 > x_range.0) || !(y_range.1 > y_range.0) {
        return Err(Error::InvalidParameter(
            "grid ranges must have max > min".into(),
        ));
    }
    let mut values = Vec::with_capacity(resolution * resolution);
    for iy in 0..resolution {
        let y = node(y_range.0, y_range.1, resolution, iy);
        for ix in 0..resolution {
            let x = node(x_range.0, x_range.1, resolution, ix);
            values.push(model.surface_value(&[F::lit(x), F::lit(y)])?);
        }
    }
    Ok(DecisionGrid {
        x_range: (x_range.0, x_range.1, resolution),
        y_range: (y_range.0, y_range.1, resolution),
        values,
    })
}
