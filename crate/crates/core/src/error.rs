use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The arguments are valid, but the operation's accuracy guarantee does not apply.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A solver or simulation configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A non-finite value appeared while time stepping.
    #[error("numerical failure at step {step}: {reason}")]
    Numerical { step: usize, reason: String },

    /// A test statistic is undefined for the given sample.
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    /// The policy state is inconsistent with its specification.
    #[error("policy logic error: {0}")]
    Logic(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
