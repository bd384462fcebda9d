//! Exit codes and the JSON error record written to stderr.

use esg_core::Error;
use serde::Serialize;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: String,
    pub message: String,
    pub exit_code: i32,
}

/// Variant name and exit code.
pub fn classify(err: &Error) -> (&'static str, i32) {
    use Error::*;
    match err {
        StepFailed { source, .. } => classify(source),
        Parse { .. } => ("ParseError", EXIT_CONFIG),
        Validation { .. } => ("ValidationError", EXIT_CONFIG),
        UnknownKey(_) => ("UnknownKey", EXIT_CONFIG),
        InstanceTooLarge { .. } => ("InstanceTooLarge", EXIT_CONFIG),
        InvalidArgument(_) => ("InvalidArgument", EXIT_CONFIG),
        DimensionMismatch(_) => ("DimensionMismatch", EXIT_CONFIG),
        NegativeWeight { .. } => ("NegativeWeight", EXIT_CONFIG),
        BadNormalization { .. } => ("BadNormalization", EXIT_CONFIG),
        NonFinitePoint(_) => ("NonFinitePoint", EXIT_CONFIG),
        EmptyMeasure => ("EmptyMeasure", EXIT_CONFIG),
        AxisOutOfRange { .. } => ("AxisOutOfRange", EXIT_CONFIG),
        EpsilonNonPositive(_) => ("EpsilonNonPositive", EXIT_CONFIG),
        NotConverged { .. } => ("NotConverged", EXIT_SOLVER),
        Degenerate => ("Degenerate", EXIT_SOLVER),
        NonFiniteUpdate(_) => ("NonFiniteUpdate", EXIT_SOLVER),
        MapProducedNonFinite(_) => ("MapProducedNonFinite", EXIT_SOLVER),
        SupportBoundViolated { .. } => ("SupportBoundViolated", EXIT_SOLVER),
        Io(_) => ("IoError", EXIT_IO),
        FormatVersionMismatch(_) => ("FormatVersionMismatch", EXIT_IO),
        ChecksumMismatch => ("ChecksumMismatch", EXIT_IO),
        Format(_) => ("FormatError", EXIT_IO),
    }
}

pub fn record_for(err: &anyhow::Error) -> ErrorRecord {
    let core = err.chain().find_map(|e| e.downcast_ref::<Error>());
    let (kind, code) = match core {
        Some(e) => classify(e),
        None => ("IoError", EXIT_IO),
    };
    ErrorRecord {
        error: kind.into(),
        message: format!("{err:#}"),
        exit_code: code,
    }
}
