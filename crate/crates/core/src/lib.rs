//! Second-order gradient boosting with class-balanced losses for binary,
//! multi-class and multi-label tabular classification.

pub mod booster;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod tuner;

pub use booster::{BoostParams, Ensemble, MultiOutput, ScoreMatrix};
pub use data::{BinMap, Dataset, FeatureMatrix, LabelBlock, LabelColumns, SplitPlan, Task, TaskKind};
pub use error::{Error, Result};
pub use losses::{GradHess, LossConfig, LossKind, LossSpec};
pub use metrics::{Averaging, ConfusionCounts, Improvement, MetricReport};
pub use tuner::{Dimension, ParamMap, Profile, SearchSpace, TrialRecord};
