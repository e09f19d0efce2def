use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("degenerate proposal: {0}")]
    Degenerate(String),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("no overlapping grid points: {0}")]
    NoOverlap(String),

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
