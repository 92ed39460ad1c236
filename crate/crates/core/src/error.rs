//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is not positive semi-definite: {0}")]
    NotPositiveSemiDefinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("selection set is empty")]
    EmptySelection,

    #[error("complement of the selection is empty")]
    EmptyComplement,

    #[error("problem too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("schedule selects {requested} indices but the ground set has {available}")]
    ScheduleExceedsGround { requested: usize, available: usize },

    #[error("partition of size {partition} cannot supply {requested} indices")]
    PartitionTooSmall { partition: usize, requested: usize },

    #[error("batch size {batch} exceeds per-step sample size {sample}")]
    BatchExceedsSample { batch: usize, sample: usize },

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
