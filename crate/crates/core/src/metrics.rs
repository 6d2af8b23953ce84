//! F1 scoring and best-of-grid improvement arithmetic.
//!
//! Scores are in percent. Binary tasks score the positive class only, so
//! every averaging mode gives the same value there. Multi-class
//! predictions take the row argmax (lowest index on ties); binary and
//! multi-label predictions are positive when `p >= threshold`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::booster::ScoreMatrix;
use crate::data::{LabelBlock, Task};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    BinaryPositive,
    #[default]
    Macro,
    Micro,
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Averaging::BinaryPositive => "binary_positive",
            Averaging::Macro => "macro",
            Averaging::Micro => "micro",
        })
    }
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "binary_positive" | "binary" => Ok(Averaging::BinaryPositive),
            "macro" => Ok(Averaging::Macro),
            "micro" => Ok(Averaging::Micro),
            _ => Err(Error::Param(format!("unknown averaging '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// F1 in percent, `None` when `tp + fp + fn = 0`.
    pub fn f1(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        (denom > 0).then(|| 100.0 * (2 * self.tp) as f64 / denom as f64)
    }

    /// Recall in percent, `None` without actual positives.
    pub fn recall(&self) -> Option<f64> {
        let denom = self.tp + self.fn_;
        (denom > 0).then(|| 100.0 * self.tp as f64 / denom as f64)
    }

    fn merged(counts: &[ConfusionCounts]) -> ConfusionCounts {
        counts.iter().fold(ConfusionCounts::default(), |a, c| ConfusionCounts {
            tp: a.tp + c.tp,
            fp: a.fp + c.fp,
            fn_: a.fn_ + c.fn_,
            tn: a.tn + c.tn,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub averaging: Averaging,
    /// One entry per scored class or label; undefined entries are 0.
    pub per_class: Vec<f64>,
    /// Classes whose score was undefined and set to 0.
    pub undefined: Vec<usize>,
    pub value: f64,
}

/// Per-class one-vs-rest confusion counts. Binary tasks yield one entry
/// for the positive class.
pub fn confusion(pred: &ScoreMatrix, labels: &LabelBlock, threshold: f64) -> Result<Vec<ConfusionCounts>> {
    let task = labels.task();
    if pred.n_rows != labels.len() || pred.n_cols != task.n_outputs() {
        return Err(Error::Shape(format!(
            "{}x{} predictions for {} rows of a {} task",
            pred.n_rows,
            pred.n_cols,
            labels.len(),
            task
        )));
    }
    let mut counts = vec![ConfusionCounts::default(); task.n_outputs()];
    for r in 0..pred.n_rows {
        let row = pred.row(r);
        match task {
            Task::MultiClass(_) => {
                let predicted = argmax(row);
                for (k, c) in counts.iter_mut().enumerate() {
                    c.add(k == predicted, labels.target(r, k) > 0.5);
                }
            }
            _ => {
                for (k, c) in counts.iter_mut().enumerate() {
                    c.add(row[k] >= threshold, labels.target(r, k) > 0.5);
                }
            }
        }
    }
    Ok(counts)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn f1(pred: &ScoreMatrix, labels: &LabelBlock, threshold: f64, averaging: Averaging) -> Result<MetricReport> {
    if averaging == Averaging::BinaryPositive && labels.task() != Task::Binary {
        return Err(Error::Metric(format!(
            "binary_positive averaging needs a binary task, got {}",
            labels.task()
        )));
    }
    let counts = confusion(pred, labels, threshold)?;
    let scores: Vec<Option<f64>> = counts.iter().map(ConfusionCounts::f1).collect();
    let undefined = (0..scores.len()).filter(|&k| scores[k].is_none()).collect();
    let per_class: Vec<f64> = scores.iter().map(|s| s.unwrap_or(0.0)).collect();
    let value = match averaging {
        Averaging::BinaryPositive | Averaging::Macro => per_class.iter().sum::<f64>() / per_class.len() as f64,
        Averaging::Micro => ConfusionCounts::merged(&counts).f1().unwrap_or(0.0),
    };
    Ok(MetricReport { metric: "f1".into(), averaging, per_class, undefined, value })
}

/// Per-class recall in percent; classes without positives get 0.
pub fn recall(pred: &ScoreMatrix, labels: &LabelBlock, threshold: f64) -> Result<Vec<f64>> {
    Ok(confusion(pred, labels, threshold)?.iter().map(|c| c.recall().unwrap_or(0.0)).collect())
}

/// Best baseline score, best class-balanced score and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub bmp: f64,
    pub cmp: f64,
    pub delta: f64,
}

pub fn improvement(bmp_runs: &[f64], cmp_runs: &[f64]) -> Result<Improvement> {
    let max = |v: &[f64], what: &str| {
        if v.is_empty() {
            return Err(Error::Metric(format!("no {what} runs")));
        }
        if v.iter().any(|x| x.is_nan()) {
            return Err(Error::Metric(format!("NaN among {what} runs")));
        }
        Ok(v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    };
    let bmp = max(bmp_runs, "baseline")?;
    let cmp = max(cmp_runs, "class-balanced")?;
    Ok(Improvement { bmp, cmp, delta: cmp - bmp })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
