//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(chrono::NaiveDate),

    #[error("log transform applied to negative value {value} in column {column}")]
    NegativeUnderLog { column: String, value: f64 },

    #[error("column mismatch: {0}")]
    ColumnMismatch(String),

    #[error("series too short: need at least {needed}, have {have}")]
    TooShort { needed: usize, have: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid split fraction {0}; must lie strictly inside (0, 1)")]
    InvalidSplit(f64),

    #[error("missing cell in column {column} at row {row}")]
    MissingCell { column: String, row: usize },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("series is constant")]
    ConstantSeries,

    #[error("need at least {needed} points, have {have}")]
    TooFewPoints { needed: usize, have: usize },

    #[error("feature count mismatch: model expects {expected}, got {got}")]
    FeatureMismatch { expected: usize, got: usize },

    #[error("need at least {needed} samples, have {have}")]
    TooFewSamples { needed: usize, have: usize },

    #[error("model variant mismatch: {0}")]
    VariantMismatch(String),

    #[error("backward pass called without forward caches")]
    MissingCache,

    #[error("metric input is empty")]
    Empty,

    #[error("observed series has zero variance")]
    ZeroVariance,

    #[error("training history is empty")]
    EmptyHistory,

    #[error("history window mismatch: model expects {expected} rows, got {got}")]
    WindowMismatch { expected: usize, got: usize },

    #[error("no measured dates fall inside the forecast horizon")]
    NoOverlap,

    #[error("invalid config: {key}: {message}")]
    Config { key: String, message: String },

    #[error("{0}")]
    MissingPrerequisite(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Config { .. } | InvalidSplit(_) | Json(_) => 1,
            FileNotFound(_)
            | Parse { .. }
            | DuplicateTimestamp(_)
            | NegativeUnderLog { .. }
            | ColumnMismatch(_)
            | TooShort { .. }
            | EmptyDataset
            | MissingCell { .. }
            | ConstantSeries
            | TooFewPoints { .. }
            | TooFewSamples { .. }
            | FeatureMismatch { .. }
            | WindowMismatch { .. }
            | NoOverlap
            | MissingPrerequisite(_)
            | Io { .. }
            | Csv(_) => 2,
            DimensionMismatch(_)
            | NonFinite { .. }
            | RankDeficient
            | VariantMismatch(_)
            | MissingCache
            | Empty
            | ZeroVariance
            | EmptyHistory
            | Numeric(_) => 3,
        }
    }
}
