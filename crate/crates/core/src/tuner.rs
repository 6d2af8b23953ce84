//! Seeded random hyperparameter search with k-fold early stopping.
//!
//! Trial `i` draws its parameters from its own generator stream, so a
//! search with `n` trials is a prefix of one with `n + 1`. Trials run in
//! parallel but are recorded and ranked by index.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::booster::{fit, BoostParams, MultiOutput};
use crate::data::{Dataset, SplitPlan, Task};
use crate::error::{Error, Result};
use crate::losses::{LossConfig, LossKind};
use crate::metrics::{self, Averaging, DEFAULT_THRESHOLD};

/// Sampled values by dimension name. Integer dimensions hold whole numbers.
pub type ParamMap = BTreeMap<String, f64>;

/// Booster configuration family searched over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Leaf-count bounded growth, one tree per output.
    LeafWise,
    /// Depth bounded growth, one tree per output.
    DepthWise,
    /// Depth bounded growth with shared multi-output trees and row
    /// subsampling.
    Sketch,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::LeafWise, Profile::DepthWise, Profile::Sketch];

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::LeafWise => "leaf_wise",
            Profile::DepthWise => "depth_wise",
            Profile::Sketch => "sketch",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Profile::ALL
            .into_iter()
            .find(|p| p.as_str() == norm)
            .ok_or_else(|| Error::Param(format!("unknown profile '{s}' (leaf_wise, depth_wise, sketch)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dimension {
    LogUniformReal { lo: f64, hi: f64 },
    LogUniformInt { lo: i64, hi: i64 },
    Choice { values: Vec<f64> },
}

impl Dimension {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            Dimension::LogUniformReal { lo, hi } => *lo > 0.0 && lo < hi && hi.is_finite(),
            Dimension::LogUniformInt { lo, hi } => *lo > 0 && lo < hi,
            Dimension::Choice { values } => !values.is_empty() && values.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Search(format!("invalid range for dimension `{name}`: {self:?}")))
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Dimension::LogUniformReal { lo, hi } => rng.random_range(lo.ln()..=hi.ln()).exp().clamp(*lo, *hi),
            Dimension::LogUniformInt { lo, hi } => {
                // widen by half a unit so the end points get their share
                let (a, b) = ((*lo as f64 - 0.5).ln(), (*hi as f64 + 0.5).ln());
                rng.random_range(a..b).exp().round().clamp(*lo as f64, *hi as f64)
            }
            Dimension::Choice { values } => values[rng.random_range(0..values.len())],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub dimensions: Vec<(String, Dimension)>,
    /// Values held constant for every trial.
    pub fixed: ParamMap,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (i, (name, dim)) in self.dimensions.iter().enumerate() {
            dim.validate(name)?;
            if self.dimensions[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::Search(format!("dimension `{name}` listed twice")));
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.dimensions.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }
}

fn log_real(name: &str, lo: f64, hi: f64) -> (String, Dimension) {
    (name.into(), Dimension::LogUniformReal { lo, hi })
}

fn log_int(name: &str, lo: i64, hi: i64) -> (String, Dimension) {
    (name.into(), Dimension::LogUniformInt { lo, hi })
}

fn choice(name: &str, values: &[f64]) -> (String, Dimension) {
    (name.into(), Dimension::Choice { values: values.to_vec() })
}

/// Candidate values of each loss parameter.
pub fn loss_grid(kind: LossKind) -> Vec<(String, Dimension)> {
    let w = || choice("w", &[2.0, 3.0, 5.0]);
    let m = || choice("margin", &[0.05, 0.2]);
    match kind {
        LossKind::Ce => vec![],
        LossKind::Wce => vec![w()],
        LossKind::Fl => vec![choice("gamma", &[0.5, 1.0, 2.0])],
        LossKind::Asl => vec![choice("gamma_pos", &[0.0, 0.1]), choice("gamma_neg", &[0.5, 1.0, 2.0]), m()],
        LossKind::Ace => vec![m()],
        LossKind::Awe => vec![w(), m()],
        LossKind::Cbce => vec![choice("beta", &[0.9, 0.99, 0.999, 0.9999])],
    }
}

pub const DEFAULT_ROUNDS: usize = 1000;
pub const DEFAULT_EARLY_STOPPING: usize = 50;

pub fn default_space(profile: Profile, kind: LossKind) -> SearchSpace {
    let mut dimensions = match profile {
        Profile::LeafWise => vec![
            log_int("num_leaves", 8, 64),
            log_real("reg_alpha", 1e-4, 2.0),
            log_real("reg_lambda", 1e-4, 2.0),
            log_real("learning_rate", 0.01, 1.0),
        ],
        Profile::DepthWise => vec![
            log_int("max_depth", 2, 10),
            log_real("reg_alpha", 1e-4, 1.0),
            log_real("reg_lambda", 1e-4, 5.0),
            log_real("learning_rate", 1e-3, 1.0),
        ],
        Profile::Sketch => vec![
            log_int("max_depth", 2, 10),
            log_real("reg_lambda", 1e-4, 2.0),
            log_real("learning_rate", 0.01, 1.0),
            log_int("max_bin", 64, 256),
            log_real("subsample", 0.05, 1.0),
        ],
    };
    dimensions.extend(loss_grid(kind));
    let fixed = ParamMap::from([
        ("n_rounds".to_string(), DEFAULT_ROUNDS as f64),
        ("early_stopping_rounds".to_string(), DEFAULT_EARLY_STOPPING as f64),
    ]);
    SearchSpace { dimensions, fixed }
}

/// Draws trial `trial` of the search seeded with `seed`.
pub fn sample(space: &SearchSpace, seed: u64, trial: usize) -> ParamMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let mut out = space.fixed.clone();
    for (name, dim) in &space.dimensions {
        out.insert(name.clone(), dim.draw(&mut rng));
    }
    out
}

fn as_count(name: &str, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Param(format!("`{name}` must be a whole number, got {v}")))
    }
}

/// Booster settings and loss configuration for one parameter map.
///
/// `base` supplies everything the map leaves out. Growth limits not named
/// by the profile are lifted: leaf-wise trees have no depth cap and
/// depth-wise trees no leaf cap.
pub fn configure(profile: Profile, kind: LossKind, params: &ParamMap, base: &BoostParams) -> Result<(BoostParams, LossConfig)> {
    let mut b = base.clone();
    match profile {
        Profile::LeafWise => {
            b.max_depth = None;
            b.multi_output = MultiOutput::PerOutput;
        }
        Profile::DepthWise => {
            b.max_leaves = None;
            b.multi_output = MultiOutput::PerOutput;
        }
        Profile::Sketch => {
            b.max_leaves = None;
            b.alpha_l1 = 0.0;
            b.multi_output = MultiOutput::Shared;
        }
    }
    let mut loss = LossConfig::new(kind);
    for (name, &v) in params {
        match name.as_str() {
            "num_leaves" => b.max_leaves = Some(as_count(name, v)?),
            "max_depth" => b.max_depth = Some(as_count(name, v)?),
            "reg_alpha" => b.alpha_l1 = v,
            "reg_lambda" => b.lambda_l2 = v,
            "learning_rate" => b.learning_rate = v,
            "max_bin" => b.max_bin = as_count(name, v)?,
            "subsample" => b.subsample = v,
            "n_rounds" => b.n_rounds = as_count(name, v)?,
            "early_stopping_rounds" => b.early_stopping_rounds = as_count(name, v)?,
            other if kind.parameter_names().contains(&other) => loss.set(other, v)?,
            other => return Err(Error::Param(format!("`{other}` is not a {profile} or {kind} parameter"))),
        }
    }
    b.validate()?;
    Ok((b, loss))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub f1: f64,
    pub best_iteration: usize,
    pub rounds_trained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub params: ParamMap,
    pub folds: Vec<FoldScore>,
    /// Mean validation F1 over folds, absent for failed trials.
    pub mean_f1: Option<f64>,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.mean_f1.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub n_trials: usize,
    pub seed: u64,
    /// Defaults for anything the sampled map does not set.
    pub base: BoostParams,
    /// Replaces the profile's default space.
    pub space: Option<SearchSpace>,
    /// Evaluated as the first trials in place of random draws.
    pub injected: Vec<ParamMap>,
    pub averaging: Option<Averaging>,
    pub threshold: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n_trials: 100,
            seed: 0,
            base: BoostParams::default(),
            space: None,
            injected: Vec::new(),
            averaging: None,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Scoring rule for a task: positive-class F1 for binary tasks, macro
/// F1 otherwise.
pub fn default_averaging(task: Task) -> Averaging {
    match task {
        Task::Binary => Averaging::BinaryPositive,
        _ => Averaging::Macro,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: TrialRecord,
    pub trials: Vec<TrialRecord>,
}

/// Fits one fold and scores `score_rows` with the fold's best iteration.
#[allow(clippy::too_many_arguments)]
fn fit_and_score(
    d: &Dataset,
    kind: LossKind,
    loss: &LossConfig,
    params: &BoostParams,
    fit_rows: &[usize],
    valid_rows: &[usize],
    score_rows: &[usize],
    averaging: Averaging,
    threshold: f64,
) -> Result<FoldScore> {
    let counts = d.labels.class_counts(fit_rows.iter().copied());
    if let Task::MultiClass(_) = d.task() {
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Search(format!("class {c} is missing from a training fold")));
        }
    }
    let spec = loss.resolve(d.task(), (kind == LossKind::Cbce).then_some(counts.as_slice()))?;
    let model = fit(d, &spec, params, fit_rows, Some(valid_rows))?;
    let x = d.features.select_rows(score_rows);
    let y = d.labels.select_rows(score_rows);
    let p = model.predict_proba(&x)?;
    let report = metrics::f1(&p, &y, threshold, averaging)?;
    Ok(FoldScore {
        f1: report.value,
        best_iteration: model.best_iteration,
        rounds_trained: model.history.rounds_trained,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    d: &Dataset,
    plan: &SplitPlan,
    kind: LossKind,
    profile: Profile,
    trial: usize,
    params: ParamMap,
    opts: &SearchOptions,
    averaging: Averaging,
) -> TrialRecord {
    let outcome = configure(profile, kind, &params, &opts.base).and_then(|(b, loss)| {
        plan.folds
            .iter()
            .map(|f| fit_and_score(d, kind, &loss, &b, &f.fit, &f.valid, &f.valid, averaging, opts.threshold))
            .collect::<Result<Vec<_>>>()
    });
    match outcome {
        Ok(folds) => {
            let mean = folds.iter().map(|f| f.f1).sum::<f64>() / folds.len() as f64;
            TrialRecord { trial, params, folds, mean_f1: Some(mean), error: None }
        }
        Err(e) => TrialRecord { trial, params, folds: Vec::new(), mean_f1: None, error: Some(e.to_string()) },
    }
}

fn check_plan(d: &Dataset, plan: &SplitPlan) -> Result<()> {
    let n = d.n_rows();
    let in_range = |v: &[usize]| v.iter().all(|&r| r < n);
    if plan.folds.is_empty()
        || !in_range(&plan.train)
        || !in_range(&plan.test)
        || plan.folds.iter().any(|f| !in_range(&f.fit) || !in_range(&f.valid) || f.fit.is_empty() || f.valid.is_empty())
    {
        return Err(Error::Split("split plan does not match the dataset".into()));
    }
    Ok(())
}

/// Random search over `profile`'s space for `kind`, each trial scored by
/// mean validation F1 over the plan's folds. The best trial is the
/// highest mean, lowest index on ties; failed trials are skipped.
pub fn run_search(
    d: &Dataset,
    plan: &SplitPlan,
    kind: LossKind,
    profile: Profile,
    opts: &SearchOptions,
) -> Result<SearchResult> {
    check_plan(d, plan)?;
    if opts.n_trials == 0 {
        return Err(Error::Search("n_trials must be at least 1".into()));
    }
    let space = opts.space.clone().unwrap_or_else(|| default_space(profile, kind));
    space.validate()?;
    let averaging = opts.averaging.unwrap_or_else(|| default_averaging(d.task()));
    let trials: Vec<TrialRecord> = (0..opts.n_trials)
        .into_par_iter()
        .map(|i| {
            let params = opts.injected.get(i).cloned().unwrap_or_else(|| sample(&space, opts.seed, i));
            run_trial(d, plan, kind, profile, i, params, opts, averaging)
        })
        .collect();
    let mut best: Option<&TrialRecord> = None;
    for t in &trials {
        if let Some(m) = t.mean_f1 {
            if best.is_none_or(|b| m > b.mean_f1.unwrap()) {
                best = Some(t);
            }
        }
    }
    let best = best
        .ok_or_else(|| {
            let first = trials.iter().find_map(|t| t.error.clone()).unwrap_or_default();
            Error::Search(format!("all {} trials failed; first error: {first}", trials.len()))
        })?
        .clone();
    Ok(SearchResult { best, trials })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEvaluation {
    pub params: ParamMap,
    /// Test-set F1 of the model refit on each fold.
    pub folds: Vec<FoldScore>,
    pub mean_f1: f64,
    pub std_f1: f64,
}

/// Refits one model per fold with `params` (early stopping on the fold's
/// validation rows) and scores each on the held-out test rows. The spread
/// is the population standard deviation.
pub fn final_evaluate(
    d: &Dataset,
    plan: &SplitPlan,
    kind: LossKind,
    profile: Profile,
    params: &ParamMap,
    opts: &SearchOptions,
) -> Result<FinalEvaluation> {
    check_plan(d, plan)?;
    if plan.test.is_empty() {
        return Err(Error::Split("split plan has no test rows".into()));
    }
    let averaging = opts.averaging.unwrap_or_else(|| default_averaging(d.task()));
    let (b, loss) = configure(profile, kind, params, &opts.base)?;
    let folds = plan
        .folds
        .par_iter()
        .map(|f| fit_and_score(d, kind, &loss, &b, &f.fit, &f.valid, &plan.test, averaging, opts.threshold))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = folds.iter().map(|f| f.f1).collect();
    let (mean_f1, std_f1) = metrics::mean_std(&scores);
    Ok(FinalEvaluation { params: params.clone(), folds, mean_f1, std_f1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_names_round_trip() {
        for p in Profile::ALL {
            assert_eq!(p.as_str().parse::<Profile>().unwrap(), p);
        }
        assert_eq!("leaf-wise".parse::<Profile>().unwrap(), Profile::LeafWise);
        assert!("gpu".parse::<Profile>().is_err());
    }

    #[test]
    fn configure_maps_names() {
        let space = default_space(Profile::LeafWise, LossKind::Awe);
        let p = sample(&space, 3, 0);
        let (b, loss) = configure(Profile::LeafWise, LossKind::Awe, &p, &BoostParams::default()).unwrap();
        assert_eq!(b.max_leaves, Some(p["num_leaves"] as usize));
        assert_eq!(b.max_depth, None);
        assert_eq!(b.alpha_l1, p["reg_alpha"]);
        assert_eq!(b.n_rounds, 1000);
        assert_eq!(b.early_stopping_rounds, 50);
        assert_eq!(loss.w, Some(p["w"]));
        assert_eq!(loss.margin, Some(p["margin"]));

        let mut bad = p.clone();
        bad.insert("max_bin".into(), 64.0);
        bad.insert("gamma".into(), 1.0);
        assert!(configure(Profile::LeafWise, LossKind::Awe, &bad, &BoostParams::default()).is_err());
    }

    #[test]
    fn invalid_spaces_are_rejected() {
        let mut s = default_space(Profile::Sketch, LossKind::Ce);
        s.dimensions.push(log_real("subsample", 0.0, 1.0));
        assert!(s.validate().is_err());
        let s = SearchSpace { dimensions: vec![choice("w", &[])], fixed: ParamMap::new() };
        assert!(s.validate().is_err());
    }
}
