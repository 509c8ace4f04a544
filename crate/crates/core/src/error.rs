use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A computation that should succeed for valid input did not.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    /// A kernel field required by a pathwise computation was not supplied.
    #[error("missing kernel field for node index {0}")]
    MissingField(usize),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }

    /// True for failures that are not the caller's fault.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NumericalFailure(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
