//! Grid of (dataset, profile, loss) cells, each a full search plus a
//! refit-per-fold test evaluation. Cells are keyed by a content hash so an
//! interrupted sweep resumes where it stopped.

use std::fs;
use std::path::{Path, PathBuf};

use imbaboost::data::make_split_plan;
use imbaboost::losses::supports;
use imbaboost::tuner::{configure, default_space, final_evaluate, run_search, FinalEvaluation, SearchOptions};
use imbaboost::{BoostParams, Dataset, LossConfig, LossKind, Profile, SplitPlan};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DatasetConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_atomic, write_csv_rows, write_json};

pub const SUMMARY_HEADER: [&str; 7] = ["dataset", "profile", "loss", "f1_mean", "f1_std", "best_params_path", "status"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub profile: String,
    pub loss: String,
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
    pub best_params_path: Option<String>,
    pub status: String,
}

impl SummaryRow {
    fn record(&self) -> Vec<String> {
        let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.dataset.clone(),
            self.profile.clone(),
            self.loss.clone(),
            num(self.f1_mean),
            num(self.f1_std),
            self.best_params_path.clone().unwrap_or_default(),
            self.status.clone(),
        ]
    }
}

/// Stored per finished cell; its presence marks the cell done.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellResult {
    row: SummaryRow,
    best_trial: usize,
    best_validation_f1: f64,
    test: FinalEvaluation,
}

/// The subset of a run config that `train` needs to reproduce a cell's
/// best model.
#[derive(Debug, Serialize)]
struct BestParams<'a> {
    loss: &'a LossConfig,
    booster: &'a BoostParams,
}

pub fn cell_key(dataset_digest: &str, profile: Profile, loss: LossKind, seed: u64) -> String {
    let mut h = Sha256::new();
    for part in [dataset_digest, profile.as_str(), loss.as_str(), &seed.to_string()] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..12])
}

fn file_digest(path: &Path) -> CliResult<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

pub struct SweepOutput {
    pub summary_path: PathBuf,
    pub rows: Vec<SummaryRow>,
    /// Cells computed by this call, as opposed to reused.
    pub computed: usize,
}

struct Cell<'a> {
    cfg: &'a RunConfig,
    name: &'a str,
    d: &'a Dataset,
    plan: &'a SplitPlan,
    profile: Profile,
    kind: LossKind,
    dir: PathBuf,
    rel_dir: String,
}

impl Cell<'_> {
    fn run(&self, log: &mut Vec<String>) -> CliResult<CellResult> {
        let cfg = self.cfg;
        if !supports(self.kind, self.d.task()) {
            return Err(CliError::Runtime(format!("{} is not available for {} tasks", self.kind, self.d.task())));
        }
        let mut space = default_space(self.profile, self.kind);
        space.fixed.extend(cfg.tuner.fixed.iter().map(|(k, v)| (k.clone(), *v)));
        let opts = SearchOptions {
            n_trials: cfg.tuner.n_trials,
            seed: cfg.seed,
            base: cfg.booster.clone(),
            space: Some(space),
            injected: Vec::new(),
            averaging: cfg.metrics.averaging,
            threshold: cfg.metrics.threshold,
        };
        let search = run_search(self.d, self.plan, self.kind, self.profile, &opts)?;
        let failed = search.trials.iter().filter(|t| t.failed()).count();
        log.push(format!("{} trials, {failed} failed, best trial {}", search.trials.len(), search.best.trial));
        let mut lines = String::new();
        for t in &search.trials {
            lines.push_str(&serde_json::to_string(t)?);
            lines.push('\n');
        }
        write_atomic(&self.dir.join("trials.jsonl"), lines.as_bytes())?;

        let (booster, loss) = configure(self.profile, self.kind, &search.best.params, &opts.base)?;
        write_json(&self.dir.join("best_params.json"), &BestParams { loss: &loss, booster: &booster })?;
        let test = final_evaluate(self.d, self.plan, self.kind, self.profile, &search.best.params, &opts)?;
        log.push(format!("test f1 {:.4} +- {:.4}", test.mean_f1, test.std_f1));
        Ok(CellResult {
            row: SummaryRow {
                dataset: self.name.to_string(),
                profile: self.profile.to_string(),
                loss: self.kind.as_str().to_string(),
                f1_mean: Some(test.mean_f1),
                f1_std: Some(test.std_f1),
                best_params_path: Some(format!("{}/best_params.json", self.rel_dir)),
                status: "ok".into(),
            },
            best_trial: search.best.trial,
            best_validation_f1: search.best.mean_f1.expect("best trial succeeded"),
            test,
        })
    }
}

fn failed_row(name: &str, profile: Profile, kind: LossKind) -> SummaryRow {
    SummaryRow {
        dataset: name.to_string(),
        profile: profile.to_string(),
        loss: kind.as_str().to_string(),
        f1_mean: None,
        f1_std: None,
        best_params_path: None,
        status: "failed".into(),
    }
}

fn prepare(cfg: &RunConfig, ds: &DatasetConfig) -> CliResult<(Dataset, SplitPlan, String)> {
    let digest = file_digest(&ds.path)?;
    let d = ds.load()?;
    let plan = make_split_plan(&d, cfg.split_seed(), cfg.split.test_fraction, cfg.split.k, cfg.split.stratify)?;
    Ok((d, plan, digest))
}

/// Runs every cell not already finished and writes `summary.csv`, one row
/// per cell in grid order. Failed cells are logged and marked; the sweep
/// goes on.
pub fn sweep(cfg: &RunConfig) -> CliResult<SweepOutput> {
    let grid = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("sweep: missing".into()))?;
    let out = cfg.out_dir();
    fs::create_dir_all(out.join("cells"))?;
    let mut rows = Vec::new();
    let mut computed = 0;
    for ds in &grid.datasets {
        let name = ds.name();
        let prepared = prepare(cfg, ds);
        if let Err(e) = &prepared {
            log::error!("{name}: {e}");
        }
        for &profile in &grid.profiles {
            for &kind in &grid.losses {
                let Ok((d, plan, digest)) = &prepared else {
                    rows.push(failed_row(&name, profile, kind));
                    continue;
                };
                let key = cell_key(digest, profile, kind, cfg.seed);
                let rel_dir = format!("cells/{key}");
                let dir = out.join(&rel_dir);
                let done = dir.join("result.json");
                if let Ok(text) = fs::read_to_string(&done) {
                    if let Ok(prev) = serde_json::from_str::<CellResult>(&text) {
                        log::info!("{name} {profile} {kind}: reusing {rel_dir}");
                        rows.push(prev.row);
                        continue;
                    }
                }
                fs::create_dir_all(&dir)?;
                let cell = Cell { cfg, name: &name, d, plan, profile, kind, dir: dir.clone(), rel_dir };
                let mut log_lines = vec![format!("dataset {name} profile {profile} loss {kind} seed {}", cfg.seed)];
                log::info!("{name} {profile} {kind}: running");
                match cell.run(&mut log_lines) {
                    Ok(res) => {
                        write_json(&done, &res)?;
                        rows.push(res.row);
                    }
                    Err(e) => {
                        log::warn!("{name} {profile} {kind}: {e}");
                        log_lines.push(format!("failed: {e}"));
                        rows.push(failed_row(&name, profile, kind));
                    }
                }
                log_lines.push(String::new());
                write_atomic(&dir.join("log.txt"), log_lines.join("\n").as_bytes())?;
                computed += 1;
            }
        }
    }
    let summary_path = out.join("summary.csv");
    let records: Vec<Vec<String>> = rows.iter().map(SummaryRow::record).collect();
    write_csv_rows(&summary_path, &SUMMARY_HEADER, &records)?;
    Ok(SweepOutput { summary_path, rows, computed })
}
