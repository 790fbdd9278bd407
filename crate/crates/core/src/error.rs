use thiserror::Error;

/// Errors raised by the tensor, estimation and inference routines.
///
/// Modes and multi-indices in messages are 1-based.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("rank out of range: {0}")]
    RankOutOfRange(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("factor {mode} is not orthonormal (deviation {deviation:.3e})")]
    NotOrthonormal { mode: usize, deviation: f64 },

    #[error("ill-conditioned core unfolding in mode {mode}: singular value ratio {ratio:.3e}")]
    IllConditioned { mode: usize, ratio: f64 },

    #[error("zero core tensor: condition number undefined")]
    ZeroCore,

    #[error("noise precondition violated at index {index:?}: {reason}")]
    NoisePrecondition { index: Vec<usize>, reason: String },

    #[error("observation set is empty")]
    EmptyObservations,

    #[error("linear form {form} is degenerate: {reason}")]
    DegenerateForm { form: usize, reason: String },

    #[error("invalid alpha {0}: must lie in (0, 1)")]
    InvalidAlpha(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("iterate diverged at step {step}: relative norm {norm:.3e} exceeds guard {guard:.3e}")]
    Divergence { step: usize, norm: f64, guard: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config schema violations: {}", .0.join("; "))]
    Schema(Vec<String>),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerical pipeline, as opposed to bad input files or configs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NotOrthonormal { .. }
                | Error::IllConditioned { .. }
                | Error::ZeroCore
                | Error::NoisePrecondition { .. }
                | Error::DegenerateForm { .. }
                | Error::Divergence { .. }
                | Error::EmptyObservations
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
