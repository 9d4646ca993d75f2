use std::path::PathBuf;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing column `{0}` in profile csv")]
    MissingColumn(String),

    #[error("timestamps are not increasing at data row {row}: `{timestamp}`")]
    Ordering { row: usize, timestamp: String },

    #[error("invalid timestamp `{0}`")]
    Timestamp(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range (len {len})")]
    Bounds { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid environment state: {0}")]
    State(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("search space of {size} candidates exceeds the limit of {limit}; use the greedy oracle instead")]
    Capacity { size: u128, limit: u128 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
