use thiserror::Error;

pub type Result<T, E = DtiError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DtiError {
    #[error("vector norm {norm:e} is at or below the degeneracy threshold")]
    ZeroVector { norm: f64 },

    #[error(
        "centered vector norm {norm:e} is at or below the degeneracy threshold (constant input)"
    )]
    ConstantVector { norm: f64 },

    #[error("retraction denominator {norm:e} is degenerate")]
    DegenerateRetraction { norm: f64 },

    #[error("slerp endpoints are antipodal (angle {angle} rad); interpolation plane undefined")]
    AntipodalInputs { angle: f64 },

    #[error("hidden state at layer {layer} is degenerate: {source}")]
    DegenerateHiddenState {
        layer: usize,
        #[source]
        source: Box<DtiError>,
    },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("oracle failed at step {step}: {source}")]
    Oracle {
        step: usize,
        #[source]
        source: Box<DtiError>,
    },

    #[error("oracle is not deterministic: two evaluations at the same point disagree")]
    NonDeterministicOracle,

    #[error("m_star is MeanVocabNorm but was never resolved against an embedding table")]
    UnresolvedMagnitude,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("line {line}: duplicate token {token:?}")]
    DuplicateToken { line: usize, token: String },

    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("gradient audit failed: max relative error {max_error:e} is not below {tolerance:e}")]
    AuditFailed { max_error: f64, tolerance: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used by the CLI to choose exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Format,
    Numeric,
}

impl DtiError {
    pub fn class(&self) -> ErrorClass {
        match self {
            DtiError::Format { .. }
            | DtiError::DuplicateToken { .. }
            | DtiError::Io(_)
            | DtiError::Json(_) => ErrorClass::Format,
            DtiError::InvalidArgument(_) | DtiError::UnknownToken(_) => ErrorClass::Usage,
            DtiError::Oracle { source, .. } => source.class(),
            _ => ErrorClass::Numeric,
        }
    }
}
