//! Tabular classification datasets: feature matrices, label blocks,
//! loaders, train/test/fold planning and feature binning.

mod binning;
mod io;
mod split;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use binning::{build_bins, BinMap};
pub use io::{load_csv, load_libsvm, write_csv, LabelColumns};
pub use split::{make_split_plan, Fold, SplitPlan, DEFAULT_FOLDS, DEFAULT_TEST_FRACTION};

/// Classification task with its class/label count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "classes", rename_all = "snake_case")]
pub enum Task {
    Binary,
    MultiClass(usize),
    MultiLabel(usize),
}

impl Task {
    /// Number of raw-score outputs a model produces for this task.
    pub fn n_outputs(self) -> usize {
        match self {
            Task::Binary => 1,
            Task::MultiClass(k) | Task::MultiLabel(k) => k,
        }
    }

    /// Number of classes (binary counts as two).
    pub fn n_classes(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::MultiClass(k) | Task::MultiLabel(k) => k,
        }
    }

    pub fn kind(self) -> TaskKind {
        match self {
            Task::Binary => TaskKind::Binary,
            Task::MultiClass(_) => TaskKind::MultiClass,
            Task::MultiLabel(_) => TaskKind::MultiLabel,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Binary => write!(f, "binary"),
            Task::MultiClass(k) => write!(f, "multi-class({k})"),
            Task::MultiLabel(k) => write!(f, "multi-label({k})"),
        }
    }
}

/// Task kind as declared by a user, before the class count is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Binary,
    #[serde(alias = "multi_class", alias = "multi-class")]
    MultiClass,
    #[serde(alias = "multi_label", alias = "multi-label")]
    MultiLabel,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Binary => "binary",
            TaskKind::MultiClass => "multiclass",
            TaskKind::MultiLabel => "multilabel",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "binary" => Ok(TaskKind::Binary),
            "multiclass" => Ok(TaskKind::MultiClass),
            "multilabel" => Ok(TaskKind::MultiLabel),
            other => Err(Error::Task(format!("unknown task kind `{other}`"))),
        }
    }
}

/// Dense row-major matrix of finite reals with an optional missing mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    missing: Option<Vec<bool>>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::check_shape(n_rows, n_cols, values.len())?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Load {
                row: pos / n_cols,
                column: (pos % n_cols).to_string(),
                message: format!("non-finite value {}", values[pos]),
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
            missing: None,
        })
    }

    /// Builds a matrix where `None` marks a missing cell.
    pub fn from_options(n_rows: usize, n_cols: usize, cells: Vec<Option<f64>>) -> Result<Self> {
        Self::check_shape(n_rows, n_cols, cells.len())?;
        let mut values = Vec::with_capacity(cells.len());
        let mut missing = Vec::with_capacity(cells.len());
        for (pos, cell) in cells.into_iter().enumerate() {
            match cell {
                Some(v) if v.is_finite() => {
                    values.push(v);
                    missing.push(false);
                }
                Some(v) => {
                    return Err(Error::Load {
                        row: pos / n_cols,
                        column: (pos % n_cols).to_string(),
                        message: format!("non-finite value {v}"),
                    })
                }
                None => {
                    values.push(0.0);
                    missing.push(true);
                }
            }
        }
        let missing = missing.iter().any(|&m| m).then_some(missing);
        Ok(Self {
            n_rows,
            n_cols,
            values,
            missing,
        })
    }

    fn check_shape(n_rows: usize, n_cols: usize, len: usize) -> Result<()> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Shape(format!(
                "feature matrix must be non-empty, got {n_rows}x{n_cols}"
            )));
        }
        if n_rows * n_cols != len {
            return Err(Error::Shape(format!(
                "{n_rows}x{n_cols} matrix needs {} values, got {len}",
                n_rows * n_cols
            )));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Value at (row, col), `None` when missing.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let pos = row * self.n_cols + col;
        match &self.missing {
            Some(mask) if mask[pos] => None,
            _ => Some(self.values[pos]),
        }
    }

    pub fn has_missing(&self) -> bool {
        self.missing.is_some()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        let mut missing = self.missing.as_ref().map(|_| Vec::with_capacity(values.capacity()));
        for &r in rows {
            let span = r * self.n_cols..(r + 1) * self.n_cols;
            values.extend_from_slice(&self.values[span.clone()]);
            if let (Some(dst), Some(src)) = (missing.as_mut(), self.missing.as_ref()) {
                dst.extend_from_slice(&src[span]);
            }
        }
        Self {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            values,
            missing,
        }
    }
}

/// Labels for every sample, stored as small integers.
///
/// Binary and multi-class hold one entry per sample; multi-label holds an
/// `n x K` row-major 0/1 block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelBlock {
    task: Task,
    values: Vec<u32>,
}

impl LabelBlock {
    pub fn binary(labels: Vec<u32>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::Label(format!("binary label must be 0 or 1, got {bad}")));
        }
        Ok(Self {
            task: Task::Binary,
            values: labels,
        })
    }

    pub fn multi_class(n_classes: usize, labels: Vec<u32>) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::Task(format!("multi-class needs K >= 2, got {n_classes}")));
        }
        if let Some(bad) = labels.iter().find(|&&y| y as usize >= n_classes) {
            return Err(Error::Label(format!(
                "class index {bad} outside [0, {n_classes})"
            )));
        }
        Ok(Self {
            task: Task::MultiClass(n_classes),
            values: labels,
        })
    }

    /// `labels` is an `n x n_labels` row-major block of 0/1.
    pub fn multi_label(n_labels: usize, labels: Vec<u32>) -> Result<Self> {
        if n_labels < 2 {
            return Err(Error::Task(format!("multi-label needs K >= 2, got {n_labels}")));
        }
        if !labels.len().is_multiple_of(n_labels) {
            return Err(Error::Shape(format!(
                "label block of length {} is not a multiple of {n_labels}",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::Label(format!("multi-label entry must be 0 or 1, got {bad}")));
        }
        Ok(Self {
            task: Task::MultiLabel(n_labels),
            values: labels,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        match self.task {
            Task::MultiLabel(k) => self.values.len() / k,
            _ => self.values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Class index for binary/multi-class samples.
    pub fn class_of(&self, row: usize) -> Option<usize> {
        match self.task {
            Task::MultiLabel(_) => None,
            _ => Some(self.values[row] as usize),
        }
    }

    /// 0/1 target of output `k` for `row`: the label itself for binary,
    /// a one-hot entry for multi-class, the label bit for multi-label.
    #[inline]
    pub fn target(&self, row: usize, k: usize) -> f64 {
        match self.task {
            Task::Binary => f64::from(self.values[row]),
            Task::MultiClass(_) => f64::from(u8::from(self.values[row] as usize == k)),
            Task::MultiLabel(n) => f64::from(self.values[row * n + k]),
        }
    }

    pub fn fill_targets(&self, row: usize, out: &mut [f64]) {
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = self.target(row, k);
        }
    }

    /// Raw per-sample entries (class index or multi-label bits).
    pub fn raw(&self) -> &[u32] {
        &self.values
    }

    /// Per-class sample counts over `rows`: `[neg, pos]` for binary,
    /// one count per class for multi-class, positives per label for
    /// multi-label.
    pub fn class_counts(&self, rows: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut counts = vec![0usize; self.task.n_classes()];
        for r in rows {
            match self.task {
                Task::Binary | Task::MultiClass(_) => counts[self.values[r] as usize] += 1,
                Task::MultiLabel(k) => {
                    for (c, &bit) in counts.iter_mut().zip(&self.values[r * k..(r + 1) * k]) {
                        *c += bit as usize;
                    }
                }
            }
        }
        counts
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let values = match self.task {
            Task::MultiLabel(k) => rows
                .iter()
                .flat_map(|&r| self.values[r * k..(r + 1) * k].iter().copied())
                .collect(),
            _ => rows.iter().map(|&r| self.values[r]).collect(),
        };
        Self {
            task: self.task,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub labels: LabelBlock,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: FeatureMatrix, labels: LabelBlock) -> Result<Self> {
        let feature_names = (0..features.n_cols()).map(|j| format!("f{j}")).collect();
        let label_names = match labels.task() {
            Task::MultiLabel(k) => (0..k).map(|j| format!("label_{j}")).collect(),
            _ => vec!["label".to_string()],
        };
        Self::with_names(features, labels, feature_names, label_names)
    }

    pub fn with_names(
        features: FeatureMatrix,
        labels: LabelBlock,
        feature_names: Vec<String>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        if features.n_rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.n_rows(),
                labels.len()
            )));
        }
        if feature_names.len() != features.n_cols() {
            return Err(Error::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.n_cols()
            )));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            label_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn task(&self) -> Task {
        self.labels.task()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            labels: self.labels.select_rows(rows),
            feature_names: self.feature_names.clone(),
            label_names: self.label_names.clone(),
        }
    }
}

/// Ratio of the most frequent class (or label) to the least frequent one.
pub fn imbalance_ratio(d: &Dataset) -> Result<f64> {
    let counts = d.labels.class_counts(0..d.n_rows());
    let min = *counts.iter().min().expect("task has at least two classes");
    let max = *counts.iter().max().expect("task has at least two classes");
    if min == 0 {
        return Err(Error::Label(
            "imbalance ratio needs at least one sample per class/label".into(),
        ));
    }
    Ok(max as f64 / min as f64)
}
