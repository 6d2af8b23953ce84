//! Newton boosting of histogram trees.
//!
//! Each round evaluates per-sample gradients and floored Hessians at the
//! current raw scores, grows a tree that greedily maximises the
//! second-order gain, and adds it with step `learning_rate`. Leaf weights
//! minimise the regularised quadratic model of the loss over the leaf:
//! `w = -T(G, alpha_l1) / (H + lambda_l2)` with `T` the soft threshold.

mod histogram;
mod tree;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_bins, BinMap, Dataset, FeatureMatrix, Task};
use crate::error::{Error, Result};
use crate::losses::{sigmoid, softmax, LossSpec, DEFAULT_H_FLOOR};
use histogram::SplitRules;
use tree::GrowParams;

pub use histogram::soft_threshold;
pub use tree::{Node, Tree};

pub const FORMAT_VERSION: u32 = 1;

/// How trees cover several model outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiOutput {
    /// One tree per round with a leaf vector covering every output.
    #[default]
    Shared,
    /// One single-output tree per output per round.
    PerOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub max_leaves: Option<usize>,
    pub lambda_l2: f64,
    pub alpha_l1: f64,
    pub min_samples_leaf: usize,
    pub max_bin: usize,
    pub subsample: f64,
    pub early_stopping_rounds: usize,
    pub seed: u64,
    pub h_floor: f64,
    pub multi_output: MultiOutput,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_rounds: 1000,
            learning_rate: 0.1,
            max_depth: Some(6),
            max_leaves: Some(31),
            lambda_l2: 1.0,
            alpha_l1: 0.0,
            min_samples_leaf: 1,
            max_bin: 255,
            subsample: 1.0,
            early_stopping_rounds: 50,
            seed: 0,
            h_floor: DEFAULT_H_FLOOR,
            multi_output: MultiOutput::Shared,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Param(m));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must be in (0, 1], got {}", self.learning_rate));
        }
        if !(self.lambda_l2 >= 0.0 && self.lambda_l2.is_finite()) {
            return bad(format!("lambda_l2 must be >= 0, got {}", self.lambda_l2));
        }
        if !(self.alpha_l1 >= 0.0 && self.alpha_l1.is_finite()) {
            return bad(format!("alpha_l1 must be >= 0, got {}", self.alpha_l1));
        }
        let depth_ok = self.max_depth.is_some_and(|d| d >= 1);
        let leaves_ok = self.max_leaves.is_some_and(|l| l >= 2);
        if !depth_ok && !leaves_ok {
            return bad("need max_depth >= 1 or max_leaves >= 2".into());
        }
        if self.max_depth == Some(0) || self.max_leaves.is_some_and(|l| l < 2) {
            return bad("max_depth must be >= 1 and max_leaves >= 2 when set".into());
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample must be in (0, 1], got {}", self.subsample));
        }
        if self.early_stopping_rounds < 1 {
            return bad("early_stopping_rounds must be >= 1".into());
        }
        if self.n_rounds < 1 {
            return bad("n_rounds must be >= 1".into());
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be >= 1".into());
        }
        if !(self.h_floor > 0.0 && self.h_floor.is_finite()) {
            return bad(format!("h_floor must be > 0, got {}", self.h_floor));
        }
        if !(2..=u16::MAX as usize - 1).contains(&self.max_bin) {
            return bad(format!("max_bin must be in [2, 65534], got {}", self.max_bin));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxRounds,
    EarlyStopping,
    NoSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct History {
    /// Mean training loss after each round, entry 0 being the base score.
    pub train_loss: Vec<f64>,
    /// Same for the validation rows when given.
    pub valid_loss: Option<Vec<f64>>,
    pub rounds_trained: usize,
    pub stop_reason: StopReason,
}

/// A trained model. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ensemble {
    pub format_version: u32,
    pub task: Task,
    pub n_outputs: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub base_score: Vec<f64>,
    pub learning_rate: f64,
    pub loss_spec: LossSpec,
    pub multi_output: MultiOutput,
    pub bin_thresholds: Vec<Vec<f64>>,
    pub trees: Vec<Tree>,
    /// Rounds used at inference.
    pub best_iteration: usize,
    pub history: History,
}

/// Initial raw scores: per-output prior logits for sigmoid tasks and
/// centred log class frequencies for softmax tasks, bounded to [-10, 10].
pub fn base_score(d: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::Param("empty training set".into()));
    }
    let n = rows.len() as f64;
    let counts = d.labels.class_counts(rows.iter().copied());
    Ok(match d.task() {
        Task::Binary => vec![prior_logit(counts[1] as f64 / n)],
        Task::MultiLabel(_) => counts.iter().map(|&c| prior_logit(c as f64 / n)).collect(),
        Task::MultiClass(_) => {
            let logs: Vec<f64> = counts.iter().map(|&c| (c as f64 / n).ln().max(-10.0)).collect();
            let mean = logs.iter().sum::<f64>() / logs.len() as f64;
            logs.iter().map(|l| l - mean).collect()
        }
    })
}

fn prior_logit(rate: f64) -> f64 {
    (rate.ln() - (1.0 - rate).ln()).clamp(-10.0, 10.0)
}

/// Trains on every row without validation.
pub fn fit_all(d: &Dataset, spec: &LossSpec, params: &BoostParams) -> Result<Ensemble> {
    let rows: Vec<usize> = (0..d.n_rows()).collect();
    fit(d, spec, params, &rows, None)
}

/// Trains on `train` rows of `d`, early stopping on `valid` rows if given.
pub fn fit(
    d: &Dataset,
    spec: &LossSpec,
    params: &BoostParams,
    train: &[usize],
    valid: Option<&[usize]>,
) -> Result<Ensemble> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::Param("empty training set".into()));
    }
    if spec.task() != d.task() {
        return Err(Error::Task(format!("loss is bound to {} but the dataset is {}", spec.task(), d.task())));
    }
    let n = d.n_rows();
    let mut in_train = vec![false; n];
    for &r in train {
        if r >= n {
            return Err(Error::Param(format!("training row {r} out of range")));
        }
        in_train[r] = true;
    }
    if let Some(v) = valid {
        if let Some(&r) = v.iter().find(|&&r| r >= n || in_train[r]) {
            return Err(Error::Param(format!("validation row {r} is out of range or also a training row")));
        }
        if v.is_empty() {
            return Err(Error::Param("empty validation set".into()));
        }
    }

    let bins = build_bins(d, train, params.max_bin)?;
    let k = spec.n_outputs();
    let base = base_score(d, train)?;
    let mut trainer = Trainer::new(d, spec, params, &bins, train, &base);
    let mut valid_state = valid.map(|v| Scored::new(d, v, &base));

    let mut train_loss = vec![trainer.state.mean_loss(spec)];
    let mut valid_loss = valid_state.as_ref().map(|s| vec![s.mean_loss(spec)]);
    let mut best = (0usize, valid_loss.as_ref().map_or(f64::INFINITY, |v| v[0]));
    let mut trees: Vec<Tree> = Vec::new();
    let mut stop_reason = StopReason::MaxRounds;
    let mut rounds = 0;

    for round in 0..params.n_rounds {
        let new_trees = trainer.round(round);
        if new_trees.is_empty() {
            stop_reason = StopReason::NoSplit;
            break;
        }
        rounds = round + 1;
        for t in &new_trees {
            trainer.state.apply_binned(t, &bins, params.learning_rate, k);
            if let Some(s) = valid_state.as_mut() {
                s.apply_binned(t, &bins, params.learning_rate, k);
            }
        }
        trees.extend(new_trees);
        train_loss.push(trainer.state.mean_loss(spec));
        if let (Some(s), Some(hist)) = (valid_state.as_ref(), valid_loss.as_mut()) {
            let l = s.mean_loss(spec);
            hist.push(l);
            if l < best.1 {
                best = (rounds, l);
            }
            if rounds - best.0 >= params.early_stopping_rounds {
                stop_reason = StopReason::EarlyStopping;
                break;
            }
        }
    }
    let best_iteration = if valid.is_some() { best.0 } else { rounds };

    Ok(Ensemble {
        format_version: FORMAT_VERSION,
        task: d.task(),
        n_outputs: k,
        n_features: d.n_features(),
        feature_names: d.feature_names.clone(),
        base_score: base,
        learning_rate: params.learning_rate,
        loss_spec: spec.clone(),
        multi_output: params.multi_output,
        bin_thresholds: bins.all_thresholds().to_vec(),
        trees,
        best_iteration,
        history: History { train_loss, valid_loss, rounds_trained: rounds, stop_reason },
    })
}

/// Raw scores and targets of a row subset, row-major.
struct Scored<'a> {
    d: &'a Dataset,
    rows: Vec<usize>,
    k: usize,
    z: Vec<f64>,
    y: Vec<f64>,
}

impl<'a> Scored<'a> {
    fn new(d: &'a Dataset, rows: &[usize], base: &[f64]) -> Self {
        let k = base.len();
        let mut y = vec![0.0; rows.len() * k];
        for (i, &r) in rows.iter().enumerate() {
            d.labels.fill_targets(r, &mut y[i * k..(i + 1) * k]);
        }
        let z = rows.iter().flat_map(|_| base.iter().copied()).collect();
        Scored { d, rows: rows.to_vec(), k, z, y }
    }

    fn apply_binned(&mut self, t: &Tree, bins: &BinMap, lr: f64, k: usize) {
        let rows = &self.rows;
        self.z.par_chunks_mut(k).zip(rows.par_iter()).for_each(|(z, &r)| {
            let leaf = t.leaf_value(t.leaf_index_binned(bins, r));
            add_leaf(z, leaf, t.output, lr);
        });
    }

    fn mean_loss(&self, spec: &LossSpec) -> f64 {
        let k = self.k;
        let per_row: Vec<f64> = self
            .z
            .par_chunks(k)
            .zip(self.y.par_chunks(k))
            .map(|(z, y)| spec.value(y, z))
            .collect();
        // summed in row order for thread-count independence
        per_row.iter().sum::<f64>() / per_row.len() as f64
    }
}

#[inline]
fn add_leaf(z: &mut [f64], leaf: &[f64], output: Option<usize>, lr: f64) {
    match output {
        Some(o) => z[o] += lr * leaf[0],
        None => {
            for (zk, &v) in z.iter_mut().zip(leaf) {
                *zk += lr * v;
            }
        }
    }
}

struct Trainer<'a> {
    spec: &'a LossSpec,
    params: &'a BoostParams,
    bins: &'a BinMap,
    state: Scored<'a>,
    grad: Vec<f64>,
    hess: Vec<f64>,
    /// Outputs still receiving trees in per-output mode.
    active: Vec<bool>,
}

impl<'a> Trainer<'a> {
    fn new(
        d: &'a Dataset,
        spec: &'a LossSpec,
        params: &'a BoostParams,
        bins: &'a BinMap,
        train: &[usize],
        base: &[f64],
    ) -> Self {
        let state = Scored::new(d, train, base);
        let len = state.z.len();
        Trainer {
            spec,
            params,
            bins,
            state,
            grad: vec![0.0; len],
            hess: vec![0.0; len],
            active: vec![true; base.len()],
        }
    }

    fn compute_gradients(&mut self) {
        let k = self.state.k;
        let floor = self.params.h_floor;
        let spec = self.spec;
        self.grad
            .par_chunks_mut(k)
            .zip(self.hess.par_chunks_mut(k))
            .zip(self.state.z.par_chunks(k).zip(self.state.y.par_chunks(k)))
            .for_each(|((g, h), (z, y))| {
                spec.grad_hess_raw(y, z, g, h);
                for v in h.iter_mut() {
                    *v = v.max(floor);
                }
            });
    }

    /// Positions (into the training rows) used this round.
    fn sampled_positions(&self, round: usize) -> Vec<u32> {
        let n = self.state.rows.len();
        if self.params.subsample >= 1.0 {
            return (0..n as u32).collect();
        }
        let m = ((self.params.subsample * n as f64).round() as usize).clamp(1, n);
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        rng.set_stream(round as u64);
        let mut picked: Vec<u32> = sample(&mut rng, n, m).into_iter().map(|i| i as u32).collect();
        picked.sort_unstable();
        picked
    }

    /// Grows this round's trees; empty when nothing could be split.
    fn round(&mut self, round: usize) -> Vec<Tree> {
        self.compute_gradients();
        let k = self.state.k;
        let positions = self.sampled_positions(round);
        // split search indexes bins by dataset row, gradients by position
        let rows: Vec<u32> = positions.iter().map(|&p| self.state.rows[p as usize] as u32).collect();
        let (grad, hess) = self.scatter(&positions);
        let grow = GrowParams {
            rules: SplitRules {
                lambda: self.params.lambda_l2,
                alpha: self.params.alpha_l1,
                min_samples_leaf: self.params.min_samples_leaf,
            },
            max_depth: self.params.max_depth,
            max_leaves: self.params.max_leaves,
        };
        if k == 1 || self.params.multi_output == MultiOutput::Shared {
            let outputs: Vec<usize> = (0..k).collect();
            tree::grow(self.bins, rows, &grad, &hess, k, &outputs, &grow, round, None)
                .into_iter()
                .collect()
        } else {
            let mut out = Vec::new();
            for o in 0..k {
                if !self.active[o] {
                    continue;
                }
                match tree::grow(self.bins, rows.clone(), &grad, &hess, k, &[o], &grow, round, Some(o)) {
                    Some(t) => out.push(t),
                    None => self.active[o] = false,
                }
            }
            out
        }
    }

    /// Gradients laid out by dataset row so tree growth can index them
    /// with the same ids as the bin columns. Rows outside this round's
    /// sample stay zero and are never visited.
    fn scatter(&self, positions: &[u32]) -> (Vec<f64>, Vec<f64>) {
        let k = self.state.k;
        let n = self.state.d.n_rows();
        let mut g = vec![0.0; n * k];
        let mut h = vec![0.0; n * k];
        for &p in positions {
            let p = p as usize;
            let r = self.state.rows[p];
            g[r * k..(r + 1) * k].copy_from_slice(&self.grad[p * k..(p + 1) * k]);
            h[r * k..(r + 1) * k].copy_from_slice(&self.hess[p * k..(p + 1) * k]);
        }
        (g, h)
    }
}

impl Ensemble {
    fn leaf_width(&self, t: &Tree) -> usize {
        if t.output.is_some() {
            1
        } else {
            self.n_outputs
        }
    }

    /// Trees used at inference.
    pub fn active_trees(&self) -> impl Iterator<Item = &Tree> {
        let best = self.best_iteration;
        self.trees.iter().filter(move |t| t.round < best)
    }

    /// Copy that predicts with the first `rounds` rounds only.
    pub fn truncated(&self, rounds: usize) -> Ensemble {
        let mut e = self.clone();
        e.trees.retain(|t| t.round < rounds);
        e.best_iteration = rounds.min(self.best_iteration);
        e
    }

    fn check_shape(&self, x: &FeatureMatrix) -> Result<()> {
        if x.n_cols() != self.n_features {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.n_cols()
            )));
        }
        Ok(())
    }

    /// Raw scores, `n x n_outputs` row-major.
    pub fn predict_raw(&self, x: &FeatureMatrix) -> Result<ScoreMatrix> {
        self.check_shape(x)?;
        let k = self.n_outputs;
        let trees: Vec<&Tree> = self.active_trees().collect();
        let mut values = vec![0.0; x.n_rows() * k];
        values.par_chunks_mut(k).enumerate().for_each(|(r, z)| {
            z.copy_from_slice(&self.base_score);
            for t in &trees {
                add_leaf(z, t.leaf_value(t.leaf_index(x, r)), t.output, self.learning_rate);
            }
        });
        Ok(ScoreMatrix { n_rows: x.n_rows(), n_cols: k, values })
    }

    /// Sigmoid of each output for binary and multi-label tasks, row-wise
    /// softmax for multi-class.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<ScoreMatrix> {
        let mut s = self.predict_raw(x)?;
        let k = s.n_cols;
        match self.task {
            Task::MultiClass(_) => s.values.par_chunks_mut(k).for_each(|row| {
                let p = softmax(row);
                row.copy_from_slice(&p);
            }),
            _ => s.values.par_iter_mut().for_each(|v| *v = sigmoid(*v)),
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(s).map_err(|e| Error::Model(format!("unreadable model: {e}")))?;
        match raw.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => return Err(Error::Model(format!("unsupported format version {v}, expected {FORMAT_VERSION}"))),
            None => return Err(Error::Model("missing format_version".into())),
        }
        let e: Ensemble = serde_json::from_value(raw).map_err(|e| Error::Model(format!("invalid model: {e}")))?;
        e.validate()?;
        Ok(e)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Model(m));
        if self.n_outputs != self.task.n_outputs() || self.base_score.len() != self.n_outputs {
            return bad("output count does not match the task".into());
        }
        if self.loss_spec.task() != self.task {
            return bad("loss task does not match the model task".into());
        }
        if self.feature_names.len() != self.n_features || self.bin_thresholds.len() != self.n_features {
            return bad("feature metadata does not match n_features".into());
        }
        if self.base_score.iter().any(|v| !v.is_finite()) || !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("non-finite base score or learning rate".into());
        }
        for (i, t) in self.trees.iter().enumerate() {
            if t.output.is_some_and(|o| o >= self.n_outputs) {
                return bad(format!("tree {i} targets a missing output"));
            }
            t.validate(self.n_features, self.leaf_width(t)).or_else(|m| bad(format!("tree {i}: {m}")))?;
        }
        Ok(())
    }

    /// Writes atomically: a temporary file in the target directory is
    /// renamed into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Dense row-major matrix of scores or probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::Shape(format!("{} values for a {n_rows}x{n_cols} matrix", values.len())));
        }
        Ok(Self { n_rows, n_cols, values })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let values = rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        Self { n_rows: rows.len(), n_cols: self.n_cols, values }
    }
}
