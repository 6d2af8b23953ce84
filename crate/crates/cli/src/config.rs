//! Run configuration: one JSON document, optionally layered from several
//! files, with dotted `--a.b value` flags overriding single keys.

use std::fs;
use std::path::{Path, PathBuf};

use imbaboost::data::{load_csv, load_libsvm, DEFAULT_FOLDS, DEFAULT_TEST_FRACTION};
use imbaboost::metrics::DEFAULT_THRESHOLD;
use imbaboost::tuner::ParamMap;
use imbaboost::{Averaging, BoostParams, Dataset, LabelColumns, LossConfig, LossKind, Profile, Task, TaskKind};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Libsvm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Name used in reports; defaults to the file stem.
    pub name: Option<String>,
    pub path: PathBuf,
    /// Guessed from the extension when absent (`.csv` or LibSVM otherwise).
    pub format: Option<Format>,
    pub task: TaskKind,
    /// Required for CSV files.
    pub labels: Option<LabelColumns>,
}

impl DatasetConfig {
    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
        })
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_else(|| {
            let csv = self.path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            if csv {
                Format::Csv
            } else {
                Format::Libsvm
            }
        })
    }

    fn validate(&self, key: &str) -> CliResult<()> {
        if !self.path.is_file() {
            return Err(CliError::Config(format!("{key}.path: file not found: {}", self.path.display())));
        }
        if self.format() == Format::Csv && self.labels.is_none() {
            return Err(CliError::Config(format!("{key}.labels: required for CSV datasets")));
        }
        Ok(())
    }

    pub fn load(&self) -> CliResult<Dataset> {
        let d = match self.format() {
            Format::Csv => load_csv(&self.path, self.labels.as_ref().expect("validated"), self.task)?,
            Format::Libsvm => load_libsvm(&self.path, self.task)?,
        };
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Defaults to the run seed.
    pub seed: Option<u64>,
    pub test_fraction: f64,
    pub k: usize,
    pub stratify: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { seed: None, test_fraction: DEFAULT_TEST_FRACTION, k: DEFAULT_FOLDS, stratify: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerConfig {
    pub n_trials: usize,
    pub profile: Profile,
    /// Overrides of the search space's fixed values, e.g. `n_rounds`.
    pub fixed: ParamMap,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self { n_trials: 100, profile: Profile::LeafWise, fixed: ParamMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Positive-class F1 for binary tasks and macro F1 otherwise when unset.
    pub averaging: Option<Averaging>,
    pub threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { averaging: None, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub datasets: Vec<DatasetConfig>,
    pub profiles: Vec<Profile>,
    pub losses: Vec<LossKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: Option<DatasetConfig>,
    pub loss: Option<LossConfig>,
    #[serde(default)]
    pub booster: BoostParams,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub tuner: TunerConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    pub sweep: Option<SweepConfig>,
    pub out: Option<PathBuf>,
}

pub const DEFAULT_OUT: &str = "imbaboost-out";

impl RunConfig {
    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or(self.seed)
    }

    /// Checks everything that does not need the data itself.
    pub fn validate(&self) -> CliResult<()> {
        let cfg = |m: String| Err(CliError::Config(m));
        if let Err(e) = self.booster.validate() {
            return cfg(format!("booster: {e}"));
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return cfg(format!("split.test_fraction: must be in (0, 1), got {}", self.split.test_fraction));
        }
        if self.split.k < 2 {
            return cfg(format!("split.k: need at least 2 folds, got {}", self.split.k));
        }
        if self.tuner.n_trials < 1 {
            return cfg("tuner.n_trials: must be at least 1".into());
        }
        if !(self.metrics.threshold > 0.0 && self.metrics.threshold < 1.0) {
            return cfg(format!("metrics.threshold: must be in (0, 1), got {}", self.metrics.threshold));
        }
        if let Some(d) = &self.dataset {
            d.validate("dataset")?;
            if let Some(loss) = &self.loss {
                check_loss(loss, d.task, "loss")?;
            }
        }
        if let Some(s) = &self.sweep {
            if s.datasets.is_empty() || s.profiles.is_empty() || s.losses.is_empty() {
                return cfg("sweep: datasets, profiles and losses must all be non-empty".into());
            }
            for (i, d) in s.datasets.iter().enumerate() {
                d.validate(&format!("sweep.datasets[{i}]"))?;
            }
        }
        Ok(())
    }

    pub fn require_dataset(&self) -> CliResult<&DatasetConfig> {
        self.dataset.as_ref().ok_or_else(|| CliError::Config("dataset: missing".into()))
    }

    pub fn require_loss(&self) -> CliResult<&LossConfig> {
        self.loss.as_ref().ok_or_else(|| CliError::Config("loss: missing".into()))
    }
}

/// Resolves a loss against a representative task of the given kind so
/// parameter and capability errors surface before any data is read.
fn check_loss(loss: &LossConfig, kind: TaskKind, key: &str) -> CliResult<()> {
    let task = match kind {
        TaskKind::Binary => Task::Binary,
        TaskKind::MultiClass => Task::MultiClass(3),
        TaskKind::MultiLabel => Task::MultiLabel(3),
    };
    let counts = vec![1; task.n_classes()];
    loss.resolve(task, Some(&counts)).map(|_| ()).map_err(|e| CliError::Config(format!("{key}: {e}")))
}

/// Merges `patch` into `base`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Sets `a.b.c` to `raw`, read as JSON when it parses and as a string
/// otherwise.
pub fn set_dotted(root: &mut Value, key: &str, raw: &str) -> CliResult<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed override key `{key}`")));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(CliError::Config(format!("`{}` is not an object", parts[..i].join("."))));
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!()
}

pub struct ConfigSources<'a> {
    pub files: &'a [PathBuf],
    pub overrides: &'a [(String, String)],
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
}

/// Layers config files, then dotted overrides, then `--seed`/`--out`,
/// and deserializes strictly. The run seed also seeds the booster unless
/// `booster.seed` is given explicitly.
pub fn load_config(src: &ConfigSources) -> CliResult<RunConfig> {
    let mut root = Value::Object(Map::new());
    for path in src.files {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: invalid JSON: {e}", path.display())))?;
        if !v.is_object() {
            return Err(CliError::Config(format!("{}: top level must be an object", path.display())));
        }
        merge(&mut root, v);
    }
    for (k, v) in src.overrides {
        set_dotted(&mut root, k, v)?;
    }
    if let Some(seed) = src.seed {
        set_dotted(&mut root, "seed", &seed.to_string())?;
    }
    if let Some(out) = src.out {
        root["out"] = Value::String(out.to_string_lossy().into_owned());
    }
    if let Some(seed) = root.get("seed").cloned() {
        let booster = root
            .as_object_mut()
            .expect("object")
            .entry("booster")
            .or_insert_with(|| Value::Object(Map::new()));
        if let Value::Object(b) = booster {
            b.entry("seed").or_insert(seed);
        }
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(root).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}
