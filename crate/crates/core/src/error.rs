use thiserror::Error;

use crate::coeffs::{EvalError, ParseError};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid too coarse: 2^{n} points cannot hold a stencil of half-width {p}")]
    GridTooCoarse { n: u32, p: usize },

    #[error("grid has {total_qubits} qubits, above the limit of {limit}")]
    GridTooLarge { total_qubits: u32, limit: u32 },

    #[error("dense operator of size {size} exceeds the guard of {limit}")]
    DenseTooLarge { size: usize, limit: usize },

    #[error("axis {axis} is out of range for a {dim}-dimensional grid")]
    InvalidAxis { axis: usize, dim: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("reference not converged: {0}")]
    ReferenceNotConverged(String),

    #[error("asymptotic regime not reached: {0}")]
    RegimeNotReached(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical contract (as opposed to bad input).
    pub fn is_numerical_contract(&self) -> bool {
        matches!(
            self,
            Error::ReferenceNotConverged(_)
                | Error::RegimeNotReached(_)
                | Error::DegenerateFit(_)
                | Error::NonFinite(_)
        )
    }
}
