use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("header mismatch: {0}")]
    Header(String),

    #[error("row {row}: expected {expected} fields, found {found}")]
    RowArity {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: {message}")]
    BadCell { row: usize, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("cluster {cluster} has zero membership mass")]
    DegenerateCluster { cluster: usize },

    #[error("cannot form {k} clusters from {n} instances")]
    TooFewInstances { n: usize, k: usize },

    #[error("schema mismatch: model fingerprint {expected}, input fingerprint {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    Version { found: String, supported: String },

    #[error("corrupted model file: {0}")]
    Corrupted(String),

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
