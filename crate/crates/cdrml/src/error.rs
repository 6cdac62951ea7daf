use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {msg}")]
    Schema { path: PathBuf, msg: String },

    /// A malformed data row, reported with its 1-based line number.
    #[error("{path}:{line}: {msg}")]
    Row {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Data(String),

    #[error("model: {0}")]
    Model(String),

    #[error("experiment: {0}")]
    Experiment(String),
}

pub type Result<T> = std::result::Result<T, Error>;
