//! Cyclic coordinate descent for the weighted lasso
//!
//! ```text
//! (2n)^{-1} ||t - D b||^2 + lambda * sum_{k not free} w_k |b_k|
//! ```
//!
//! Columns listed in the free set carry no penalty. Sweeps always visit
//! coordinates in ascending order, so a fit is a deterministic function of
//! its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{HotError, Result};
use crate::linalg::{axpy, dot, Matrix, PivotedQr};

/// Penalty level, per-column weights and the unpenalized (free) columns.
///
/// `weights` has one entry per design column; entries for free columns are
/// ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub free_set: Vec<usize>,
}

impl PenaltySpec {
    /// Unit weights on every column, nothing free.
    pub fn uniform(lambda: f64, q: usize) -> Self {
        PenaltySpec { lambda, weights: vec![1.0; q], free_set: Vec::new() }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        PenaltySpec { lambda, ..self.clone() }
    }

    pub fn is_free(&self, k: usize) -> bool {
        self.free_set.contains(&k)
    }

    /// Indices of penalized columns, ascending.
    pub fn penalized(&self) -> Vec<usize> {
        let free = self.free_mask();
        (0..self.weights.len()).filter(|&k| !free[k]).collect()
    }

    fn free_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.weights.len()];
        for &k in &self.free_set {
            if k < mask.len() {
                mask[k] = true;
            }
        }
        mask
    }

    /// Effective per-column thresholds `lambda * w_k` (zero for free columns).
    fn thresholds(&self) -> Vec<f64> {
        let free = self.free_mask();
        self.weights
            .iter()
            .zip(free)
            .map(|(w, f)| if f { 0.0 } else { self.lambda * w })
            .collect()
    }

    fn validate(&self, q: usize) -> Result<()> {
        if self.weights.len() != q {
            return Err(HotError::DimensionMismatch(format!(
                "{} penalty weights for {} columns",
                self.weights.len(),
                q
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(HotError::InvalidConfig(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if let Some(i) = self.weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(HotError::InvalidConfig(format!("penalty weight {i} is {}", self.weights[i])));
        }
        let mut seen = vec![false; q];
        for &k in &self.free_set {
            if k >= q {
                return Err(HotError::IndexOutOfRange { index: k, len: q });
            }
            if seen[k] {
                return Err(HotError::InvalidConfig(format!("column {k} listed twice in free set")));
            }
            seen[k] = true;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence threshold for both the per-sweep coefficient change and
    /// the KKT certificate.
    pub tol: f64,
    /// Maximum number of sweeps (full or active-set).
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-7, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub residual: Vec<f64>,
    pub lambda_used: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of the subgradient conditions, on the `D^T r / n`
    /// scale.
    pub kkt_violation: f64,
}

impl LassoFit {
    pub fn rss(&self) -> f64 {
        dot(&self.residual, &self.residual)
    }

    /// Number of nonzero coefficients among the penalized columns.
    pub fn penalized_support(&self, penalty: &PenaltySpec) -> usize {
        let free = penalty.free_mask();
        self.coefficients.iter().zip(free).filter(|(b, f)| !*f && **b != 0.0).count()
    }
}

#[inline]
fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Value of the penalized least-squares objective at `coefficients`.
pub fn lasso_objective(design: &Matrix, target: &[f64], coefficients: &[f64], penalty: &PenaltySpec) -> f64 {
    let n = design.nrows() as f64;
    let fitted = design.mul_vec(coefficients);
    let rss: f64 = target.iter().zip(&fitted).map(|(t, f)| (t - f) * (t - f)).sum();
    let pen: f64 = penalty.thresholds().iter().zip(coefficients).map(|(t, b)| t * b.abs()).sum();
    rss / (2.0 * n) + pen
}

/// Largest subgradient-condition violation of `coefficients` given its
/// residual.
pub fn kkt_violation(design: &Matrix, residual: &[f64], coefficients: &[f64], penalty: &PenaltySpec) -> f64 {
    let n = design.nrows() as f64;
    let thresholds = penalty.thresholds();
    let mut worst = 0.0f64;
    for (k, col) in design.columns().enumerate() {
        let g = dot(col, residual) / n;
        let t = thresholds[k];
        let b = coefficients[k];
        let v = if t == 0.0 {
            g.abs()
        } else if b > 0.0 {
            (g - t).abs()
        } else if b < 0.0 {
            (g + t).abs()
        } else {
            (g.abs() - t).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Smallest lambda at which every penalized coefficient is zero, after the
/// free columns have absorbed what they can of `target`.
pub fn null_threshold(design: &Matrix, target: &[f64], penalty: &PenaltySpec) -> f64 {
    let n = design.nrows() as f64;
    let base = if penalty.free_set.is_empty() {
        target.to_vec()
    } else {
        let free = design.select_columns(&penalty.free_set);
        PivotedQr::new(&free, 1e-10).residual(target)
    };
    let free = penalty.free_mask();
    design
        .columns()
        .enumerate()
        .filter(|(k, _)| !free[*k] && penalty.weights[*k] > 0.0)
        .map(|(k, col)| dot(col, &base).abs() / (n * penalty.weights[k]))
        .fold(0.0, f64::max)
}

/// Solves the weighted lasso by cyclic coordinate descent.
///
/// Each outer pass is a full ascending sweep; between full sweeps the
/// currently nonzero (and free) coordinates are swept until stable. A fit is
/// accepted once a full sweep moves no coefficient by more than `tol` and the
/// KKT certificate is within `tol`.
pub fn weighted_lasso(
    design: &Matrix,
    target: &[f64],
    penalty: &PenaltySpec,
    warm_start: Option<&[f64]>,
    options: SolverOptions,
) -> Result<LassoFit> {
    weighted_lasso_observed(design, target, penalty, warm_start, options, |_| {})
}

/// Same as [`weighted_lasso`], calling `observer` with the coefficients after
/// every sweep.
pub fn weighted_lasso_observed(
    design: &Matrix,
    target: &[f64],
    penalty: &PenaltySpec,
    warm_start: Option<&[f64]>,
    options: SolverOptions,
    mut observer: impl FnMut(&[f64]),
) -> Result<LassoFit> {
    let n = design.nrows();
    let q = design.ncols();
    if target.len() != n {
        return Err(HotError::DimensionMismatch(format!("target length {} for {} rows", target.len(), n)));
    }
    if q == 0 {
        return Err(HotError::DimensionMismatch("design has no columns".into()));
    }
    penalty.validate(q)?;
    if let Some(w) = warm_start {
        if w.len() != q {
            return Err(HotError::DimensionMismatch(format!("warm start of length {} for {} columns", w.len(), q)));
        }
    }
    if !penalty.free_set.is_empty() {
        let free = design.select_columns(&penalty.free_set);
        let rank = PivotedQr::new(&free, 1e-10).rank();
        if rank < penalty.free_set.len() {
            return Err(HotError::RankDeficientFreeSet { rank, expected: penalty.free_set.len() });
        }
    }

    let nf = n as f64;
    let thresholds = penalty.thresholds();
    let free = penalty.free_mask();
    let col_sq: Vec<f64> = design.columns().map(|c| dot(c, c) / nf).collect();
    let max_sq = col_sq.iter().cloned().fold(0.0, f64::max);
    // columns annihilated by an upstream projection carry no information
    let mut live: Vec<bool> = col_sq.iter().map(|&s| s > 1e-24 * max_sq.max(1e-300)).collect();
    // At or above the null threshold the penalized coefficients are exactly
    // zero; pinning them keeps rounding in the soft threshold from leaving
    // stray nonzeros.
    if penalty.lambda >= null_threshold(design, target, penalty) {
        live.iter_mut().zip(&free).for_each(|(l, f)| *l &= *f);
    }

    let mut coef: Vec<f64> = match warm_start {
        Some(w) => w.iter().zip(&live).map(|(b, l)| if *l { *b } else { 0.0 }).collect(),
        None => vec![0.0; q],
    };
    let mut residual = target.to_vec();
    for (k, &b) in coef.iter().enumerate() {
        if b != 0.0 {
            axpy(-b, design.col(k), &mut residual);
        }
    }

    let update = |k: usize, coef: &mut [f64], residual: &mut [f64]| -> f64 {
        let col = design.col(k);
        let old = coef[k];
        let z = dot(col, residual) / nf + col_sq[k] * old;
        let new = soft_threshold(z, thresholds[k]) / col_sq[k];
        if new != old {
            axpy(old - new, col, residual);
            coef[k] = new;
            (new - old).abs()
        } else {
            0.0
        }
    };

    let tol = options.tol;
    let mut sweeps = 0;
    let mut active: Vec<usize> = Vec::with_capacity(q);
    let mut kkt = f64::INFINITY;
    let mut converged = false;

    while sweeps < options.max_iter {
        let mut change = 0.0f64;
        for k in 0..q {
            if live[k] {
                change = change.max(update(k, &mut coef, &mut residual));
            }
        }
        sweeps += 1;
        observer(&coef);

        if change <= tol {
            kkt = kkt_violation(design, &residual, &coef, penalty);
            if kkt <= tol {
                converged = true;
                break;
            }
            continue;
        }

        active.clear();
        active.extend((0..q).filter(|&k| live[k] && (coef[k] != 0.0 || free[k])));
        while sweeps < options.max_iter {
            let mut change = 0.0f64;
            for &k in &active {
                change = change.max(update(k, &mut coef, &mut residual));
            }
                sweeps += 1;
            observer(&coef);
            if change <= tol {
                break;
            }
        }
    }

    if !converged {
        kkt = kkt_violation(design, &residual, &coef, penalty);
    }
    let fit = LassoFit {
        coefficients: coef,
        residual,
        lambda_used: penalty.lambda,
        iterations: sweeps,
        converged,
        kkt_violation: kkt,
    };
    if converged {
        Ok(fit)
    } else {
        Err(HotError::NotConverged { max_iter: options.max_iter, best: Box::new(fit) })
    }
}
