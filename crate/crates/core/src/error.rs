use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),

    #[error("group {group} has {size} observations, at least {required} are needed")]
    InsufficientSample {
        group: usize,
        size: usize,
        required: usize,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("{path}: line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Ingest {
        path: PathBuf,
        line: u64,
        column: Option<usize>,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
