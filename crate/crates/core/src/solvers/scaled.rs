//! Scaled lasso: joint estimate of coefficients and noise level by
//! alternating a lasso step at penalty `sigma * lambda0` with the update
//! `sigma <- ||y - X b|| / sqrt(n)`.

use serde::{Deserialize, Serialize};

use super::lasso::{weighted_lasso, LassoFit, PenaltySpec, SolverOptions};
use crate::data::Dataset;
use crate::error::{HotError, Result};
use crate::linalg::norm2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledLassoFit {
    pub beta_init: Vec<f64>,
    pub sigma_hat: f64,
    pub lambda0: f64,
    /// Number of alternating (lasso, sigma) rounds.
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledLassoOptions {
    /// Relative change in sigma that stops the alternation.
    pub tol: f64,
    pub max_iter: usize,
    pub lasso: SolverOptions,
}

impl Default for ScaledLassoOptions {
    fn default() -> Self {
        ScaledLassoOptions { tol: 1e-7, max_iter: 200, lasso: SolverOptions { tol: 1e-9, max_iter: 10_000 } }
    }
}

/// `sqrt(2 log(p) / n)`
pub fn universal_lambda(n: usize, p: usize) -> f64 {
    (2.0 * (p as f64).ln() / n as f64).sqrt()
}

const SIGMA_FLOOR: f64 = 1e-12;

pub fn scaled_lasso(data: &Dataset, lambda0: f64, options: ScaledLassoOptions) -> Result<ScaledLassoFit> {
    if !data.is_standardized() {
        return Err(HotError::InvalidConfig("scaled lasso expects a standardized dataset".into()));
    }
    if !(lambda0.is_finite() && lambda0 > 0.0) {
        return Err(HotError::InvalidConfig(format!("lambda0 must be positive, got {lambda0}")));
    }
    let x = data.x();
    let y = data.y();
    let root_n = (data.n() as f64).sqrt();
    let mut sigma = norm2(y) / root_n;
    if sigma < SIGMA_FLOOR {
        return Err(HotError::SigmaCollapse { sigma });
    }
    let mut penalty = PenaltySpec::uniform(sigma * lambda0, data.p());
    let mut warm: Option<Vec<f64>> = None;
    let mut last: Option<LassoFit> = None;

    for round in 1..=options.max_iter {
        penalty.lambda = sigma * lambda0;
        let fit = weighted_lasso(x, y, &penalty, warm.as_deref(), options.lasso)?;
        let next = norm2(&fit.residual) / root_n;
        if next < SIGMA_FLOOR {
            return Err(HotError::SigmaCollapse { sigma: next });
        }
        if (next - sigma).abs() <= options.tol * sigma {
            return Ok(ScaledLassoFit { beta_init: fit.coefficients, sigma_hat: next, lambda0, iterations: round });
        }
        sigma = next;
        warm = Some(fit.coefficients.clone());
        last = Some(fit);
    }
    let mut best = last.expect("at least one round ran");
    best.converged = false;
    Err(HotError::NotConverged { max_iter: options.max_iter, best: Box::new(best) })
}
