use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A file (IDX, CSV, model, config) failed to parse.
    #[error("format error: {0}")]
    Format(String),

    /// Training produced non-finite or runaway parameters.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// Sparsity kinds whose penalty formulas are extension slots.
    #[error("unsupported sparsity kind: {0} (extension slot, no formula in this version)")]
    UnsupportedSparsity(&'static str),

    /// Exact enumeration refused because the model is too large.
    #[error("enumeration limit exceeded: {0}")]
    EnumerationLimit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
