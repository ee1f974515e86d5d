//! Error types shared across the engine.

use thiserror::Error;

/// Engine-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown domain tag '{0}'")]
    UnknownDomain(String),

    #[error("unknown user tier '{0}'")]
    UnknownTier(String),

    #[error("active operator pool is empty")]
    EmptyPool,

    #[error("operator '{0}' is not in the active pool")]
    InactiveOperator(String),

    #[error("operator '{0}' is already in the active pool")]
    DuplicateOperator(String),

    #[error("refusing to remove the last active operator '{0}'")]
    LastOperator(String),

    #[error("layer {layer} out of range 1..={max}")]
    LayerOutOfRange { layer: usize, max: usize },

    #[error("invalid parameter '{key}': {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("priority table {table} has no entry for factor value '{value}'")]
    MissingPriorityFactor { table: usize, value: String },

    #[error("fusion requires two distinct active operators, got '{0}' twice")]
    FusionSelfPair(String),

    #[error("fusion generator failed: {0}")]
    FusionGenerator(String),

    #[error("architecture is malformed: {0}")]
    MalformedArchitecture(String),

    #[error("counterfactual position {position} out of range for {steps} steps")]
    PositionOutOfRange { position: usize, steps: usize },

    #[error("task '{0}' not found in the simulated world")]
    UnknownTask(String),

    #[error("event log corrupt: expected sequence {expected}, found {found}")]
    LogSequenceGap { expected: u64, found: u64 },

    #[error("event log corrupt: {0}")]
    LogCorrupt(String),

    #[error("snapshot does not match reconstructed state at sequence {0}")]
    SnapshotMismatch(u64),

    #[error("snapshot/pool mismatch: {0}")]
    SnapshotPoolMismatch(String),

    #[error("report text is malformed: {0}")]
    MalformedReport(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
