//! Crate-wide error type.

use thiserror::Error;

use crate::expr::ParseError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A precondition on the arguments was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Division by zero or a comparable arithmetic failure in exact mode.
    #[error("arithmetic error: {0}")]
    Arithmetic(String),

    /// A value left the representable floating-point range.
    #[error("range error: {0}")]
    Range(String),

    /// Expression text did not match the grammar.
    #[error("{0}")]
    Parse(#[from] ParseError),

    /// Evaluation outside a function's mathematical domain (log of a
    /// non-positive argument, division by zero, 0 raised to a negative power).
    #[error("domain error: {0}")]
    Domain(String),

    /// A bound strategy was requested for a function it is not valid for.
    #[error("strategy misuse: {0}")]
    StrategyMisuse(String),

    /// No supporting line exists at the requested point.
    #[error("no support line: {0}")]
    NoSupport(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
