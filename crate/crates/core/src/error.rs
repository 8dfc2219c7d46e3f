use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("unknown scenario id {0} (expected 1, 2, 3 or 4)")]
    UnknownScenario(u8),

    #[error("unsupported estimation method `{name}`: {reason}")]
    UnsupportedMethod { name: String, reason: &'static str },

    #[error("probability vector is not on the simplex (sum = {sum})")]
    NotSimplex { sum: f64 },

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("ground truth is not available for this dataset")]
    TruthUnavailable,

    #[error("numerical failure in {context}: {message}")]
    Numerical {
        context: &'static str,
        message: String,
    },

    #[error("config error: field `{field}` {constraint}")]
    Config { field: String, constraint: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Self {
        Self::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn numerical(context: &'static str, message: impl Into<String>) -> Self {
        Self::Numerical {
            context,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Self::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self::Config {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}
