use thiserror::Error;

use crate::solvers::LassoFit;

pub type Result<T, E = HotError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HotError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {what} at position {index}")]
    NonFiniteInput { what: &'static str, index: usize },

    #[error("column {column} has zero variance")]
    DegenerateColumn { column: usize },

    #[error("response has zero variance")]
    DegenerateResponse,

    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("coordinate descent did not converge in {max_iter} sweeps (kkt violation {:.3e})", .best.kkt_violation)]
    NotConverged { max_iter: usize, best: Box<LassoFit> },

    #[error("unpenalized columns are linearly dependent (rank {rank} < {expected})")]
    RankDeficientFreeSet { rank: usize, expected: usize },

    #[error("scaled lasso noise estimate collapsed to {sigma:.3e}")]
    SigmaCollapse { sigma: f64 },

    #[error("every point of the tuning grid failed")]
    AllFitsFailed,

    #[error("gram matrix X X^T is singular; use a positive ridge")]
    SingularGram,

    #[error("every candidate screening size was rank deficient")]
    AllRankDeficient,

    #[error("screened columns are rank deficient (rank {rank} < {expected})")]
    RankDeficientScreenSet { rank: usize, expected: usize },

    #[error("index {index} out of range for {len} columns")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("direction for coordinate {j} is degenerate (norm {norm:.3e})")]
    DegenerateDirection { j: usize, norm: f64 },

    #[error("z_j^T x_j is numerically zero for coordinate {j}")]
    DegenerateInnerProduct { j: usize },

    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),

    #[error("invalid coefficient pattern: {0}")]
    InvalidPattern(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{failed} of {total} replications failed")]
    FatalSimFailure { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
