use thiserror::Error;

use crate::experiments::TrajectoryLog;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("non-finite or out-of-range numeric input: {0}")]
    NumericDomain(String),

    #[error("internal invariant violated: {0}")]
    InvariantViolation(String),

    #[error("arm set is empty")]
    EmptyArmSet,

    #[error("no arm is allowed at this round")]
    InfeasibleRound,

    #[error("agent configuration error: {0}")]
    Configuration(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("environment construction failed: {0}")]
    Construction(String),

    #[error("environment exhausted after {} of {requested} steps", partial.len())]
    TruncatedRun {
        requested: usize,
        partial: Box<TrajectoryLog>,
    },

    #[error("invalid config value at `{key}`: {message}")]
    InvalidConfig { key: String, message: String },

    #[error("parse error in {source_name}: {message}")]
    Parse {
        source_name: String,
        message: String,
    },

    #[error("missing columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::ParameterDomain(msg.into())
    }

    pub(crate) fn parse(source_name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            message: message.into(),
        }
    }
}
