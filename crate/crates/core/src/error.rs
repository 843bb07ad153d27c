use thiserror::Error;

/// Errors produced by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OmegaError {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The operation was called in a way its contract does not allow.
    #[error("usage error: {0}")]
    Usage(String),
    /// A numerical procedure failed to converge or hit a degenerate case.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A model or rate-function description failed validation.
    #[error("validation error: {0}")]
    Validation(String),
}

pub type Result<T, E = OmegaError> = std::result::Result<T, E>;

impl OmegaError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        OmegaError::Domain(msg.into())
    }
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        OmegaError::Usage(msg.into())
    }
    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        OmegaError::Numeric(msg.into())
    }
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        OmegaError::Validation(msg.into())
    }
}
