use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("point outside chart domain: {0}")]
    Domain(String),
    #[error("grid resolution {0} below minimum of 4")]
    Resolution(usize),
    #[error("spectrum: {0}")]
    Spectrum(String),
    #[error("index {index} out of range for provider of count {count}")]
    OutOfRange { index: usize, count: usize },
    #[error("eigenpair file: {0}")]
    Schema(String),
    #[error("truncation: {0}")]
    Truncation(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unsupported backend: {0}")]
    Unsupported(String),
    #[error("iteration diverged: {0}")]
    Divergence(String),
    #[error("no convergence within {0} iterations")]
    MaxIter(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
