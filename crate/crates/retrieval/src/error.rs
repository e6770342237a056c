use thiserror::Error;

use crate::trace::ExecutionTrace;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("input array must have at least one cell")]
    Empty,
    #[error("cell {index} holds {value}, which does not fit the cell width")]
    NotABit { index: usize, value: u32 },
    #[error("cell width {0} is outside 1..=32")]
    BadWidth(u8),
    #[error("index {index} outside 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("segment string has length {got}, segment has length {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Rejected scenario or adversary parameters.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        ConfigError::Invalid(format!("input: {e}"))
    }
}

/// Ways a simulation can end without every nonfaulty peer terminating.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("deadlock: {blocked} live peers blocked with nothing in flight at t={time}")]
    DeadlockDetected { blocked: usize, time: f64, trace: Box<ExecutionTrace> },
    #[error("livelock guard: more than {cap} events")]
    LivelockGuard { cap: u64, trace: Box<ExecutionTrace> },
    #[error("execution aborted by peer {peer}: {reason}")]
    Abort { peer: u32, reason: String, trace: Box<ExecutionTrace> },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl SimError {
    /// The partial trace, when the run got far enough to have one.
    pub fn trace(&self) -> Option<&ExecutionTrace> {
        match self {
            SimError::DeadlockDetected { trace, .. }
            | SimError::LivelockGuard { trace, .. }
            | SimError::Abort { trace, .. } => Some(trace),
            SimError::Config(_) => None,
        }
    }

    pub fn into_trace(self) -> Option<ExecutionTrace> {
        match self {
            SimError::DeadlockDetected { trace, .. }
            | SimError::LivelockGuard { trace, .. }
            | SimError::Abort { trace, .. } => Some(*trace),
            SimError::Config(_) => None,
        }
    }
}
