//! Regularization-path tuning by a generalized information criterion
//!
//! ```text
//! GIC(lambda) = log(RSS / n) + |support| * log(log n) * log(q) / n
//! ```
//!
//! where `support` and `q` count penalized columns only, so adding
//! unpenalized columns to a problem leaves its criterion unchanged.

use serde::{Deserialize, Serialize};

use super::gram::{weighted_lasso_gram, GramProblem};
use super::lasso::{null_threshold, weighted_lasso, LassoFit, PenaltySpec, SolverOptions};
use crate::error::{HotError, Result};
use crate::linalg::Matrix;

/// Number of points and depth of the default log-spaced grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub len: usize,
    /// Smallest grid value as a fraction of the null threshold.
    pub min_ratio: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { len: 50, min_ratio: 0.01 }
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone)]
pub struct GicPoint {
    pub lambda: f64,
    pub gic: f64,
    pub rss: f64,
    pub support: usize,
    /// `None` when the solver failed at this point.
    pub fit: Option<LassoFit>,
}

#[derive(Debug, Clone)]
pub struct GicSelection {
    pub lambda_star: f64,
    pub fit: LassoFit,
    pub path: Vec<GicPoint>,
}

/// Criterion value for a fit with residual sum of squares `rss` and
/// `support` nonzero penalized coefficients out of `q` penalized columns.
pub fn gic_value(rss: f64, support: usize, n: usize, q: usize) -> f64 {
    let nf = n as f64;
    (rss / nf).ln() + support as f64 * nf.ln().ln() * (q.max(1) as f64).ln() / nf
}

/// Log-spaced grid from the null threshold down to `min_ratio` of it. A
/// target with no correlation to any penalized column yields the single
/// point `0`.
pub fn default_grid(design: &Matrix, target: &[f64], template: &PenaltySpec, spec: GridSpec) -> Vec<f64> {
    log_grid(null_threshold(design, target, template), spec)
}

/// Log-spaced grid from `lmax` down to `min_ratio * lmax`.
pub fn log_grid(lmax: f64, spec: GridSpec) -> Vec<f64> {
    if !(lmax > 0.0) || spec.len <= 1 {
        return vec![lmax.max(0.0)];
    }
    let ratio = spec.min_ratio.clamp(f64::MIN_POSITIVE, 1.0);
    let step = ratio.ln() / (spec.len - 1) as f64;
    (0..spec.len).map(|i| lmax * (step * i as f64).exp()).collect()
}

/// Fits the warm-started path over `grid` and keeps the criterion minimizer.
/// Ties go to the larger lambda. Failed grid points are recorded and skipped.
pub fn gic_tune(
    design: &Matrix,
    target: &[f64],
    template: &PenaltySpec,
    grid: &[f64],
    options: SolverOptions,
) -> Result<GicSelection> {
    gic_tune_with(design.nrows(), template, grid, |penalty, warm| {
        weighted_lasso(design, target, penalty, warm, options)
    })
}

/// [`gic_tune`] for a problem solved from precomputed inner products.
pub fn gic_tune_gram(
    problem: &GramProblem<'_>,
    template: &PenaltySpec,
    grid: &[f64],
    options: SolverOptions,
) -> Result<GicSelection> {
    gic_tune_with(problem.gram.nrows(), template, grid, |penalty, warm| {
        weighted_lasso_gram(problem, penalty, warm, options)
    })
}

/// Path driver shared by the solvers: `solve(penalty, warm_start)` fits one
/// grid point.
pub fn gic_tune_with(
    n: usize,
    template: &PenaltySpec,
    grid: &[f64],
    mut solve: impl FnMut(&PenaltySpec, Option<&[f64]>) -> Result<LassoFit>,
) -> Result<GicSelection> {
    if grid.is_empty() {
        return Err(HotError::InvalidConfig("empty lambda grid".into()));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HotError::InvalidConfig("lambda grid must be nonnegative and strictly decreasing".into()));
    }
    let q_pen = template.penalized().len();
    let mut path = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<f64>> = None;
    let mut best: Option<(usize, f64)> = None;

    for &lambda in grid {
        let penalty = template.with_lambda(lambda);
        match solve(&penalty, warm.as_deref()) {
            Ok(fit) => {
                let rss = fit.rss();
                let support = fit.penalized_support(&penalty);
                let gic = gic_value(rss, support, n, q_pen);
                if best.is_none_or(|(_, g)| gic < g) {
                    best = Some((path.len(), gic));
                }
                warm = Some(fit.coefficients.clone());
                path.push(GicPoint { lambda, gic, rss, support, fit: Some(fit) });
            }
            Err(HotError::NotConverged { best: partial, .. }) => {
                warm = Some(partial.coefficients.clone());
                path.push(GicPoint {
                    lambda,
                    gic: f64::NAN,
                    rss: partial.rss(),
                    support: partial.penalized_support(&penalty),
                    fit: None,
                });
            }
            Err(e) => return Err(e),
        }
    }

    let (idx, _) = best.ok_or(HotError::AllFitsFailed)?;
    let fit = path[idx].fit.clone().expect("selected point has a fit");
    Ok(GicSelection { lambda_star: grid[idx], fit, path })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design() -> (Matrix, Vec<f64>) {
        let d = Matrix::from_columns(6, &[
            vec![1.0, -1.0, 0.5, 0.2, -0.7, 0.0],
            vec![0.3, 0.1, -1.2, 0.9, 0.4, -0.5],
            vec![-0.6, 0.8, 0.2, -0.1, 1.1, -1.4],
        ]);
        let t = vec![1.2, -0.9, 0.1, 0.6, -0.2, -0.3];
        (d, t)
    }

    #[test]
    fn singleton_grid_returns_its_point() {
        let (d, t) = design();
        let sel = gic_tune(&d, &t, &PenaltySpec::uniform(0.0, 3), &[0.05], SolverOptions::default()).unwrap();
        assert_eq!(sel.lambda_star, 0.05);
        assert_eq!(sel.path.len(), 1);
    }

    #[test]
    fn null_point_uses_empty_support_and_full_rss() {
        let (d, t) = design();
        let tmpl = PenaltySpec::uniform(0.0, 3);
        let lmax = null_threshold(&d, &t, &tmpl);
        let sel = gic_tune(&d, &t, &tmpl, &[lmax * 1.5, lmax * 0.1], SolverOptions::default()).unwrap();
        let null = &sel.path[0];
        assert_eq!(null.support, 0);
        let tt: f64 = t.iter().map(|v| v * v).sum();
        assert!((null.rss - tt).abs() < 1e-14);
        assert!((null.gic - (tt / 6.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn grid_must_decrease() {
        let (d, t) = design();
        let err = gic_tune(&d, &t, &PenaltySpec::uniform(0.0, 3), &[0.1, 0.2], SolverOptions::default());
        assert!(matches!(err, Err(HotError::InvalidConfig(_))));
    }

    #[test]
    fn default_grid_spans_two_decades() {
        let (d, t) = design();
        let g = default_grid(&d, &t, &PenaltySpec::uniform(0.0, 3), GridSpec::default());
        assert_eq!(g.len(), 50);
        assert!((g[49] / g[0] - 0.01).abs() < 1e-12);
    }
}
