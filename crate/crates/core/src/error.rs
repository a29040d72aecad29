use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error in {path} at row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        /// 1-based data row (header excluded).
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path} contains no data rows")]
    EmptyFile { path: PathBuf },

    #[error("column {column:?} not found in {path}")]
    MissingColumn { path: PathBuf, column: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("sample space mismatch: {left} vs {right} cells")]
    OmegaMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),

    #[error("duplicate model id {0:?}")]
    DuplicateModel(String),

    #[error("model {id:?} has {partitions} partitions, above the padding bound {n_u}")]
    PaddingOverflow {
        id: String,
        partitions: usize,
        n_u: usize,
    },

    #[error("model {id:?} is missing {what}")]
    MissingRepresentation { id: String, what: &'static str },

    #[error("prediction error for model {id:?}: {message}")]
    Prediction { id: String, message: String },

    #[error("{0}")]
    Metric(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
