use thiserror::Error;

use crate::data::Subset;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed schema: {0}")]
    Schema(String),

    #[error("missing column `{column}`")]
    MissingColumn { column: String },

    #[error("data row {row}, column `{column}`: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("data row {row}, column `{column}`: non-finite value {value}")]
    NonFinite {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("row count mismatch: schema declares {expected} rows, file has {found}")]
    RowCount { expected: usize, found: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("singular system in {context}; refit with a ridge penalty lambda > 0")]
    Singular { context: &'static str },

    #[error("insufficient data in {context}: need at least {needed} rows, have {found}")]
    InsufficientData {
        context: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("exhaustive search over {aspects} aspects exceeds the limit of {limit}")]
    GuardLimit { aspects: usize, limit: usize },

    #[error("no reward function supplied for candidate subset {0}")]
    MissingCandidate(Subset),

    #[error("R^2 is undefined: target has zero variance")]
    UndefinedRSquared,

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
