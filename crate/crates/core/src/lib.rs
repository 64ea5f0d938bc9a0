//! Confidence intervals for individual coefficients of high-dimensional
//! sparse linear models by hybrid orthogonalization.

pub mod data;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod normal;
pub mod ortho;
pub mod screening;
pub mod selftest;
pub mod simulation;
pub mod solvers;

pub use data::{standardize, Dataset, OracleTruth};
pub use error::{HotError, Result};
pub use linalg::Matrix;
