use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("series truncation insufficient: tail bound {bound:e} exceeds tolerance {tolerance:e}")]
    Truncation { bound: f64, tolerance: f64 },
    #[error("singular evaluation: {0}")]
    Singularity(String),
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty quadrature window")]
    EmptyWindow,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid specification string `{input}`: {reason}")]
    Spec { input: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn spec(input: &str, reason: impl Into<String>) -> Self {
        Error::Spec {
            input: input.to_string(),
            reason: reason.into(),
        }
    }
}
