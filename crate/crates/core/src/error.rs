use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The operation is defined, but the requested bound needs a hypothesis that does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Over-specified inputs that disagree with each other.
    #[error("inconsistent inputs: {0}")]
    Consistency(String),
    #[error("search space of size {size} exceeds the budget {budget}")]
    Budget { size: String, budget: u64 },
    #[error("parse error at line {line}, offset {offset}: {msg}")]
    Parse {
        line: usize,
        offset: usize,
        msg: String,
    },
    #[error("internal invariant broken: {0}")]
    Invariant(String),
    #[error("the median lies beyond the horizon of {horizon} trials")]
    BeyondHorizon { horizon: u64 },
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Precondition(_) => "precondition",
            Error::Consistency(_) => "consistency",
            Error::Budget { .. } => "budget",
            Error::Parse { .. } => "parse",
            Error::Invariant(_) => "invariant",
            Error::BeyondHorizon { .. } => "beyond-horizon",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
