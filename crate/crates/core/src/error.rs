use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MgdError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A structural invariant broke inside the library (e.g. a reducer group
    /// with no teacher channels).
    #[error("internal error: {0}")]
    Internal(String),

    #[error("missing file {path}")]
    MissingFile { path: PathBuf },

    #[error("parse error in {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = MgdError> = std::result::Result<T, E>;
