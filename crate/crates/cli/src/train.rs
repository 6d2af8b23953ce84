use std::path::PathBuf;

use imbaboost::booster::{fit, History};
use imbaboost::data::make_split_plan;
use imbaboost::metrics;
use imbaboost::tuner::default_averaging;
use imbaboost::{Error, LossConfig, MetricReport, Task};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::write_json;

#[derive(Debug, Serialize)]
pub struct TrainMetrics {
    pub dataset: String,
    pub task: Task,
    pub loss: LossConfig,
    pub n_train: usize,
    pub n_valid: usize,
    pub best_iteration: usize,
    pub history: History,
    pub valid_f1: MetricReport,
}

pub struct TrainOutput {
    pub model_path: PathBuf,
    pub metrics_path: PathBuf,
    pub metrics: TrainMetrics,
}

/// Loss errors that only show up once the data is known are still
/// configuration errors.
pub(crate) fn config_error(e: Error) -> CliError {
    match e {
        Error::Capability { .. } | Error::Param(_) => CliError::Config(e.to_string()),
        other => other.into(),
    }
}

/// Fits on the training part of the split with early stopping on the
/// held-out part, and writes `model.json` and `metrics.json`.
pub fn train(cfg: &RunConfig) -> CliResult<TrainOutput> {
    let ds = cfg.require_dataset()?;
    let loss = cfg.require_loss()?;
    let d = ds.load()?;
    let plan = make_split_plan(&d, cfg.split_seed(), cfg.split.test_fraction, cfg.split.k, cfg.split.stratify)?;
    let counts = d.labels.class_counts(plan.train.iter().copied());
    let spec = loss.resolve(d.task(), Some(&counts)).map_err(config_error)?;
    log::info!("training {} on {} rows of {}", spec.kind(), plan.train.len(), ds.name());
    let model = fit(&d, &spec, &cfg.booster, &plan.train, Some(&plan.test))?;

    let p = model.predict_proba(&d.features.select_rows(&plan.test))?;
    let averaging = cfg.metrics.averaging.unwrap_or_else(|| default_averaging(d.task()));
    let valid_f1 = metrics::f1(&p, &d.labels.select_rows(&plan.test), cfg.metrics.threshold, averaging)?;

    let out = cfg.out_dir();
    let model_path = out.join("model.json");
    let metrics_path = out.join("metrics.json");
    std::fs::create_dir_all(&out)?;
    model.save(&model_path)?;
    let metrics = TrainMetrics {
        dataset: ds.name(),
        task: d.task(),
        loss: loss.clone(),
        n_train: plan.train.len(),
        n_valid: plan.test.len(),
        best_iteration: model.best_iteration,
        history: model.history.clone(),
        valid_f1,
    };
    write_json(&metrics_path, &metrics)?;
    Ok(TrainOutput { model_path, metrics_path, metrics })
}
