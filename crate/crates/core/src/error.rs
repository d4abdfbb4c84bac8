use thiserror::Error;

/// Errors raised by the simulator, target builders and optimizers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cutoff must be at least 2, got {0}")]
    CutoffTooSmall(usize),

    #[error("cutoff mismatch: expected {expected}, got {actual}")]
    CutoffMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("mode index {index} out of range for {num_modes} modes")]
    ModeOutOfRange { index: usize, num_modes: usize },

    #[error("mode index {0} repeated")]
    RepeatedMode(usize),

    #[error("operator arity {arity} does not match {given} mode indices")]
    ArityMismatch { arity: usize, given: usize },

    #[error("expected a single-mode state, got {0} modes")]
    NotSingleMode(usize),

    #[error("pattern {pattern:?} invalid: {reason}")]
    InvalidPattern { pattern: Vec<usize>, reason: String },

    #[error("heralding probability {probability:e} below threshold {threshold:e}")]
    VoidOutcome { probability: f64, threshold: f64 },

    #[error("target support exceeds cutoff: {0}")]
    SupportExceedsCutoff(String),

    #[error("truncation leakage {leakage:e} exceeds tolerance {tolerance:e}")]
    Leakage { leakage: f64, tolerance: f64 },

    #[error("series did not converge: {0}")]
    NonConvergence(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("objective returned a non-finite value")]
    NonFinite,

    #[error("not enough comparable patterns: {0}")]
    NotEnoughPatterns(String),
}

pub type Result<T> = std::result::Result<T, Error>;
