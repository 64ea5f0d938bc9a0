//! Penalized regression solvers.

mod gic;
mod gram;
mod lasso;
mod scaled;

pub use gic::{
    default_grid, gic_tune, gic_tune_gram, gic_tune_with, gic_value, log_grid, GicPoint, GicSelection, GridSpec,
};
pub use gram::{weighted_lasso_gram, Gram, GramProblem};
pub use lasso::{
    kkt_violation, lasso_objective, null_threshold, weighted_lasso, weighted_lasso_observed, LassoFit,
    PenaltySpec, SolverOptions,
};
pub use scaled::{scaled_lasso, universal_lambda, ScaledLassoFit, ScaledLassoOptions};
