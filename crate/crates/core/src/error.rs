use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid input data or configuration.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported moment order {0} (expected 1 or 2)")]
    UnsupportedOrder(u32),

    /// The propagation never terminates (or never starts to fail), so the
    /// requested quantity has no finite value.
    #[error("degenerate process: {0}")]
    Degenerate(String),

    /// A numerical routine failed to reach its tolerance.
    #[error("numeric error: {message} (best estimate {estimate}, error estimate {error_estimate})")]
    Numeric {
        message: String,
        estimate: f64,
        error_estimate: f64,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
