use std::io;

use thiserror::Error;

use crate::data::Task;
use crate::losses::LossKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}, column {column}: {message}")]
    Load {
        row: usize,
        column: String,
        message: String,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("label error: {0}")]
    Label(String),
    #[error("task error: {0}")]
    Task(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("loss {kind} is not available for {task} tasks (capability table)")]
    Capability { kind: LossKind, task: Task },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("search error: {0}")]
    Search(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
