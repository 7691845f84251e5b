use std::path::PathBuf;

use thiserror::Error;

use crate::model::ModelParams;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{column}` is constant; cannot map it onto the basis domain")]
    DegenerateColumn { column: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("log argument {value} at observation {obs}, dimension {dim} is not positive and no clamp level is set")]
    NonPositiveLogArgument { obs: usize, dim: usize, value: f64 },

    #[error(
        "cannot shift dimension {dim} into the restricted domain: the shift direction does not raise every derivative"
    )]
    InfeasibleShift { dim: usize },

    #[error("optimizer diverged after {iterations} iterations (non-finite loss)")]
    Diverged { iterations: usize, last: Box<ModelParams> },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("cannot compare parameter sets: {0}")]
    ShapeMismatch(String),

    #[error("column `{0}` not found in input")]
    MissingColumn(String),

    #[error("{path}: line {line}: {message}")]
    Load { path: PathBuf, line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
