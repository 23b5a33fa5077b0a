use thiserror::Error;

/// Errors raised by the queueing engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the region where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The request is mathematically meaningful but not supported for these
    /// parameters (e.g. an infinite-mean service law where a mean is needed).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A conditioning event has probability zero.
    #[error("degenerate condition: {0}")]
    Degenerate(String),

    /// No solution exists for the requested target.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A probability argument lies outside the admissible range.
    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: u64,
        message: String,
    },

    #[error("sampler did not converge: {0}")]
    NonConvergence(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
