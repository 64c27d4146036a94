use thiserror::Error;

/// Errors raised anywhere in the tomography pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("matrix is not positive semi-definite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("state vector is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("rank {rank} out of range 1..={dim}")]
    RankOutOfRange { rank: usize, dim: usize },

    #[error("invalid measurement axis {0:?}")]
    InvalidAxis(char),

    #[error("invalid basis label {0:?}")]
    InvalidBasis(String),

    #[error("invalid outcome {0:?}")]
    InvalidOutcome(String),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("{n} visible units exceed the exact-mode cap of {cap}; use sampling mode")]
    ExactModeCap { n: usize, cap: usize },

    #[error("no record survives the denominator floor {0:e}")]
    FloorTooHigh(f64),

    #[error("eigenvalue estimate {0} leaves nothing to deflate")]
    DegenerateDeflation(f64),

    #[error("deflated probability {value:e} at record {record} is negative beyond tolerance")]
    NegativeDeflation { record: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training failed: {0}")]
    TrainingFailed(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
