use thiserror::Error;

/// Errors produced anywhere in the flow training stack.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed instance {instance}: {reason}")]
    MalformedInstance { instance: u64, reason: String },
    #[error("sequencing error: {0}")]
    Sequencing(String),
    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite gradient rejected")]
    NonFiniteGradient,
    #[error("rollout at depth {0} would launch a nested rollout")]
    NestedRollout(usize),
    #[error("infeasible dataset config: {0}")]
    InfeasibleConfig(String),
    #[error("oracle enumeration exceeded {limit} sequences")]
    EnumerationLimit { limit: u64 },
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("pair mismatch: {0}")]
    PairMismatch(String),
    #[error("no feasible subset: {0}")]
    EmptySubset(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("dataset format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FlowError>;
