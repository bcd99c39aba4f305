use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A decomposition or iterative solver did not converge.
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// Inputs violate a documented precondition (dimensions, Hermitian-ness, ...).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// A channel draw is numerically rank deficient; the caller should redraw.
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::NumericFailure(msg.into())
    }
}
