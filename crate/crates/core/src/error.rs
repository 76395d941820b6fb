use thiserror::Error;

/// Errors raised by the fcov library.
#[derive(Debug, Error)]
pub enum FcovError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty sample")]
    EmptySample,

    #[error("underdetermined polynomial fit: n = {n} observations for order {order}")]
    Underdetermined { n: usize, order: usize },

    /// Every component of the product series has zero long-run variance.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("eigen-solver failure: {0}")]
    Eigen(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FcovError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FcovError::InvalidInput(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        FcovError::DimensionMismatch(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, FcovError>;
