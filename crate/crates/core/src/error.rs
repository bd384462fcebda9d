use thiserror::Error;

use crate::dynamics::Trajectory;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("negative weight {weight} at atom {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("weights sum to {sum}, deviating from 1 by more than 1e-9")]
    BadNormalization { sum: f64 },
    #[error("non-finite coordinate at atom {0}")]
    NonFinitePoint(usize),
    #[error("empty measure")]
    EmptyMeasure,
    #[error("map produced a non-finite image for atom {0}")]
    MapProducedNonFinite(usize),
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("epsilon must be positive, got {0}")]
    EpsilonNonPositive(f64),
    #[error("Sinkhorn did not converge after {iterations} iterations (marginal error {marginal_error:e})")]
    NotConverged {
        iterations: usize,
        marginal_error: f64,
    },

    #[error("instance {n}x{m} exceeds the exact-OT size guard")]
    InstanceTooLarge { n: usize, m: usize },
    #[error("network simplex failed to terminate (degenerate cycling)")]
    Degenerate,

    #[error("step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("non-finite position after update of atom {0}")]
    NonFiniteUpdate(usize),
    #[error("support radius {radius} exceeds a-priori bound {bound} at step {step}")]
    SupportBoundViolated {
        step: usize,
        radius: f64,
        bound: f64,
        partial: Box<Trajectory>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{field}`: {constraint}")]
    Validation { field: String, constraint: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("unsupported trajectory format version `{0}`")]
    FormatVersionMismatch(String),
    #[error("trajectory checksum mismatch or truncated file")]
    ChecksumMismatch,
    #[error("malformed trajectory file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Strips `StepFailed` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::StepFailed { source, .. } => source.root(),
            other => other,
        }
    }
}
