//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NonHermitian(f64),

    #[error("eigenvalue iteration exceeded its sweep cap")]
    NoConvergence,

    #[error("factor index {index} out of range for {count} tensor factors")]
    BadFactorIndex { index: usize, count: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("value out of range: {0}")]
    RangeError(String),

    #[error("reduced states on the shared factor differ by {0:.3e}")]
    MarginalMismatch(f64),

    #[error("effects do not form a POVM: {0}")]
    NotAPOVM(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("statistics table shape invalid: {0}")]
    ShapeError(String),

    #[error("relaxation level {level} too low; word {word} needs level {required}")]
    LevelTooLow {
        level: usize,
        required: usize,
        word: String,
    },

    #[error("moment problem infeasible: {0}")]
    Infeasible(String),

    #[error("quadrature node count {0} outside the supported range 2..=8")]
    NodesOutOfRange(usize),

    #[error("missing fixture file: {0}")]
    FixtureMissing(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
