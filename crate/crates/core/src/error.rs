use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("level {level} is not available ({available} explicit levels, no tail rule)")]
    LevelOutOfRange { level: usize, available: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("no depth t' <= {horizon} makes every composed multiplicity exceed its threshold")]
    HorizonExceeded { horizon: usize },

    #[error("depth {depth} exhausted: {reason}")]
    DepthExhausted { depth: usize, reason: String },

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("trace is not in the requested fiber: {0}")]
    FiberMismatch(String),

    #[error("selection ({k},{l},{m}) is not a Dirac measure")]
    NonDirac { k: usize, l: usize, m: usize },

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("cannot parse exact number {0:?}")]
    Parse(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
