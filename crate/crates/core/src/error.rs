use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("{what} = {value} outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no convergence after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("rank {found} is below the required {expected}")]
    RankDeficient { expected: usize, found: usize },
    #[error("all data vectors are zero")]
    EmptyData,
    #[error("data vector {index} lies outside the subspace (residual {residual:e})")]
    OutsideSpan { index: usize, residual: f64 },
    #[error("run diverged at round {round}: non-finite {what}")]
    Diverged { round: u64, what: &'static str },
    #[error("contract violated: {0}")]
    Contract(String),
}
