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
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("eigensolver did not converge: {0}")]
    NonConvergence(String),
    #[error("no operator cache for {shape} at {dir}; run `diffnet precompute --input {shape} --out {dir}` first")]
    MissingCache { shape: PathBuf, dir: PathBuf },
    #[error("stale operator cache: {0}")]
    StaleCache(String),
    #[error("corrupt cache or checkpoint: {0}")]
    Corrupt(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("variable is not recorded on this tape (detached)")]
    Detached,
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
