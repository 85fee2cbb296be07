use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A theoretical hypothesis (supercriticality, simplicity, support) does not hold.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {message} (residual estimate {residual:e})")]
    NumericalFailure { message: String, residual: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degenerate data: row {row} {message}")]
    DegenerateData { row: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
