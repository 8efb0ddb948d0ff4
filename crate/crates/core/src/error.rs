use thiserror::Error;

/// Errors raised by the computational kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The requested work would exceed the configured memory or size budget.
    #[error("resource budget exceeded: {0}")]
    Resource(String),

    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A coefficient source has no value at the given prime.
    #[error("coefficient source has no value at p = {prime}")]
    MissingData { prime: u64 },

    /// The curve is singular modulo the given prime.
    #[error("bad reduction at p = {prime}")]
    BadReduction { prime: u64 },

    /// A parameter system violates one of its defining inequalities.
    #[error("constraint violated: {0}")]
    Constraint(String),

    /// Malformed textual input (rationals, cache files, words).
    #[error("parse error: {0}")]
    Parse(String),

    /// Filesystem failure.
    #[error("i/o error: {0}")]
    Io(String),

    /// An internal invariant failed; always a bug.
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
