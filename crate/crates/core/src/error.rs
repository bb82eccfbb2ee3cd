use thiserror::Error;

/// Errors raised by the OTFS library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("duplicate delay-Doppler tap (alpha={alpha}, beta={beta}); taps must occupy distinct bins")]
    DuplicateTap { alpha: i64, beta: i64 },

    #[error("path {index} has a fractional delay/Doppler offset; an integer-tap channel is required")]
    FractionalTap { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("candidate set of {candidates} vectors exceeds the cap of {cap}")]
    CandidateCapExceeded { candidates: f64, cap: usize },

    #[error("multi-index exponent {exponent} exceeds the cap of {cap}")]
    MultiIndexCapExceeded { exponent: usize, cap: usize },

    #[error("zero eigenvalue passed to the full-rank bound (rank {rank} < {dim})")]
    RankDeficient { rank: usize, dim: usize },

    #[error("singular linear system")]
    Singular,

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("need at least {needed} points for a slope estimate, found {found}")]
    InsufficientPoints { needed: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(expected: impl ToString, found: impl ToString) -> Error {
    Error::DimensionMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
