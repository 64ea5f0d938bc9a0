//! Coordinate descent driven by precomputed inner products.
//!
//! Many regressions here share one candidate matrix `D`: the target is a
//! column of `D` and the predictors are other columns of `D`. With
//! `G = D^T D` formed once, a coordinate update costs `O(|A|)` on an active
//! set `A` instead of `O(n)`. Sweeps over `A` alternate with exact solves of
//! the stationarity equations at fixed signs, which is what makes
//! nearly saturated fits (support close to `n`) affordable. The returned
//! residual is computed from the data.

use super::lasso::{LassoFit, PenaltySpec, SolverOptions};
use crate::error::{HotError, Result};
use crate::linalg::{axpy, dot, Cholesky, Matrix};

/// `D^T D` for an `n x m` matrix `D`.
#[derive(Debug, Clone)]
pub struct Gram {
    n: usize,
    g: Matrix,
}

impl Gram {
    pub fn new(design: &Matrix) -> Gram {
        let m = design.ncols();
        let mut g = Matrix::zeros(m, m);
        for c in 0..m {
            let cc = design.col(c);
            for r in 0..=c {
                let v = dot(design.col(r), cc);
                g.set(r, c, v);
                g.set(c, r, v);
            }
        }
        Gram { n: design.nrows(), g }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.g.get(a, b)
    }

    fn col(&self, k: usize) -> &[f64] {
        self.g.col(k)
    }
}

/// Regression of column `target` of `design` on columns `cols`.
#[derive(Clone, Copy)]
pub struct GramProblem<'a> {
    pub design: &'a Matrix,
    pub gram: &'a Gram,
    pub cols: &'a [usize],
    pub target: usize,
}

impl GramProblem<'_> {
    /// `max_k |d_k^T t| / (n w_k)` over columns with positive weight.
    pub fn null_threshold(&self, penalty: &PenaltySpec) -> f64 {
        let n = self.gram.n as f64;
        let tcol = self.gram.col(self.target);
        self.cols
            .iter()
            .zip(&penalty.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(&k, w)| tcol[k].abs() / (n * w))
            .fold(0.0, f64::max)
    }

    /// Exact gradient `D_cols^T (t - D_cols b) / n`.
    fn gradient(&self, coef: &[f64]) -> Vec<f64> {
        let n = self.gram.n as f64;
        let tcol = self.gram.col(self.target);
        let mut g: Vec<f64> = self.cols.iter().map(|&k| tcol[k] / n).collect();
        for (pos, &b) in coef.iter().enumerate() {
            if b != 0.0 {
                let gk = self.gram.col(self.cols[pos]);
                for (gl, &l) in g.iter_mut().zip(self.cols) {
                    *gl -= gk[l] * b / n;
                }
            }
        }
        g
    }

    fn residual(&self, coef: &[f64]) -> Vec<f64> {
        let mut r = self.design.col(self.target).to_vec();
        for (pos, &b) in coef.iter().enumerate() {
            if b != 0.0 {
                axpy(-b, self.design.col(self.cols[pos]), &mut r);
            }
        }
        r
    }
}

/// Active-set sweeps between sign-fixed steps.
const NEWTON_AFTER: usize = 16;

/// The lasso restricted to a few columns, with their inner products
/// gathered into a dense block.
struct ActiveSet {
    n: f64,
    g: Matrix,
    target_dot: Vec<f64>,
    thresholds: Vec<f64>,
    col_sq: Vec<f64>,
    coef: Vec<f64>,
    grad: Vec<f64>,
}

impl ActiveSet {
    fn new(
        problem: &GramProblem<'_>,
        active: &[usize],
        coef: &[f64],
        grad: &[f64],
        thresholds: &[f64],
        col_sq: &[f64],
    ) -> ActiveSet {
        let m = active.len();
        let mut g = Matrix::zeros(m, m);
        for (c, &kc) in active.iter().enumerate() {
            let col = problem.gram.col(problem.cols[kc]);
            for (dst, &kr) in g.col_mut(c).iter_mut().zip(active) {
                *dst = col[problem.cols[kr]];
            }
        }
        let tcol = problem.gram.col(problem.target);
        ActiveSet {
            n: problem.gram.n as f64,
            g,
            target_dot: active.iter().map(|&k| tcol[problem.cols[k]]).collect(),
            thresholds: active.iter().map(|&k| thresholds[k]).collect(),
            col_sq: active.iter().map(|&k| col_sq[k]).collect(),
            coef: active.iter().map(|&k| coef[k]).collect(),
            grad: active.iter().map(|&k| grad[k]).collect(),
        }
    }

    fn update(&mut self, k: usize) -> f64 {
        let old = self.coef[k];
        let z = self.grad[k] + self.col_sq[k] * old;
        let new = soft(z, self.thresholds[k]) / self.col_sq[k];
        if new == old {
            return 0.0;
        }
        self.coef[k] = new;
        axpy(-(new - old) / self.n, self.g.col(k), &mut self.grad);
        (new - old).abs()
    }

    /// Sweeps until no coefficient moves by more than `tol`; returns the
    /// number of sweeps.
    fn solve(&mut self, tol: f64, budget: usize) -> usize {
        let m = self.coef.len();
        let mut sweeps = 0;
        while sweeps < budget {
            let mut change = 0.0f64;
            for k in 0..m {
                change = change.max(self.update(k));
            }
            sweeps += 1;
            if change <= tol {
                break;
            }
            if sweeps % NEWTON_AFTER == 0 {
                self.sign_fixed_step();
            }
        }
        sweeps
    }

    /// Moves the nonzero coefficients toward the minimizer with their signs
    /// held fixed, stopping where the first one reaches zero. The objective
    /// never increases.
    fn sign_fixed_step(&mut self) {
        let support: Vec<usize> = (0..self.coef.len()).filter(|&k| self.coef[k] != 0.0).collect();
        let m = support.len();
        if m < 2 {
            return;
        }
        let mut g = Matrix::zeros(m, m);
        for (c, &kc) in support.iter().enumerate() {
            let col = self.g.col(kc);
            for (dst, &kr) in g.col_mut(c).iter_mut().zip(&support) {
                *dst = col[kr];
            }
        }
        let Some(chol) = Cholesky::new(&g) else { return };
        let rhs: Vec<f64> = support
            .iter()
            .map(|&k| self.target_dot[k] - self.n * self.thresholds[k] * self.coef[k].signum())
            .collect();
        let target = chol.solve(&rhs);
        if target.iter().any(|v| !v.is_finite()) {
            return;
        }
        let mut theta = 1.0f64;
        let mut blocking = None;
        for (pos, &k) in support.iter().enumerate() {
            let (b, t) = (self.coef[k], target[pos]);
            if t.signum() != b.signum() {
                let cross = b / (b - t);
                if cross < theta {
                    theta = cross;
                    blocking = Some(k);
                }
            }
        }
        for (pos, &k) in support.iter().enumerate() {
            self.coef[k] += theta * (target[pos] - self.coef[k]);
        }
        if let Some(k) = blocking {
            self.coef[k] = 0.0;
        }
        self.grad.copy_from_slice(&self.target_dot);
        for (k, &b) in self.coef.iter().enumerate() {
            if b != 0.0 {
                axpy(-b, self.g.col(k), &mut self.grad);
            }
        }
        for v in &mut self.grad {
            *v /= self.n;
        }
    }
}

fn kkt_from_gradient(g: &[f64], coef: &[f64], thresholds: &[f64], live: &[bool]) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..g.len() {
        if !live[k] {
            continue;
        }
        let t = thresholds[k];
        let b = coef[k];
        let v = if t == 0.0 {
            g[k].abs()
        } else if b > 0.0 {
            (g[k] - t).abs()
        } else if b < 0.0 {
            (g[k] + t).abs()
        } else {
            (g[k].abs() - t).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Weighted lasso of the problem's target on its columns. Same objective
/// and certificate as [`super::weighted_lasso`]: a fit is returned only when
/// the KKT violation is at most `tol`. The free set must be empty.
pub fn weighted_lasso_gram(
    problem: &GramProblem<'_>,
    penalty: &PenaltySpec,
    warm_start: Option<&[f64]>,
    options: SolverOptions,
) -> Result<LassoFit> {
    let q = problem.cols.len();
    if q == 0 {
        return Err(HotError::DimensionMismatch("design has no columns".into()));
    }
    if penalty.weights.len() != q {
        return Err(HotError::DimensionMismatch(format!("{} penalty weights for {} columns", penalty.weights.len(), q)));
    }
    if !penalty.free_set.is_empty() {
        return Err(HotError::InvalidConfig("inner-product solver does not take a free set".into()));
    }
    if !(penalty.lambda.is_finite() && penalty.lambda >= 0.0) {
        return Err(HotError::InvalidConfig(format!("lambda must be finite and >= 0, got {}", penalty.lambda)));
    }
    if let Some(w) = warm_start {
        if w.len() != q {
            return Err(HotError::DimensionMismatch(format!("warm start of length {} for {} columns", w.len(), q)));
        }
    }

    let gram = problem.gram;
    let n = gram.n as f64;
    let cols = problem.cols;
    let thresholds: Vec<f64> = penalty.weights.iter().map(|w| penalty.lambda * w).collect();
    let col_sq: Vec<f64> = cols.iter().map(|&k| gram.get(k, k) / n).collect();
    let max_sq = col_sq.iter().cloned().fold(0.0, f64::max);
    let mut live: Vec<bool> = col_sq.iter().map(|&s| s > 1e-24 * max_sq.max(1e-300)).collect();
    if penalty.lambda >= problem.null_threshold(penalty) {
        live.fill(false);
    }

    let mut coef: Vec<f64> = match warm_start {
        Some(w) => w.iter().zip(&live).map(|(b, l)| if *l { *b } else { 0.0 }).collect(),
        None => vec![0.0; q],
    };
    let mut grad = problem.gradient(&coef);

    let tol = options.tol;
    let mut sweeps = 0;
    let mut converged = false;

    // Each round solves on the current support plus every column whose
    // optimality condition fails, then re-checks all columns.
    while sweeps < options.max_iter {
        if kkt_from_gradient(&grad, &coef, &thresholds, &live) <= tol {
            converged = true;
            break;
        }
        let active: Vec<usize> =
            (0..q).filter(|&k| live[k] && (coef[k] != 0.0 || grad[k].abs() > thresholds[k])).collect();
        let mut sub = ActiveSet::new(problem, &active, &coef, &grad, &thresholds, &col_sq);
        sweeps += sub.solve(tol, options.max_iter - sweeps);
        for (pos, &k) in active.iter().enumerate() {
            coef[k] = sub.coef[pos];
        }
        grad = problem.gradient(&coef);
    }

    let fit = LassoFit {
        kkt_violation: kkt_from_gradient(&grad, &coef, &thresholds, &live),
        residual: problem.residual(&coef),
        coefficients: coef,
        lambda_used: penalty.lambda,
        iterations: sweeps,
        converged,
    };
    if converged {
        Ok(fit)
    } else {
        Err(HotError::NotConverged { max_iter: options.max_iter, best: Box::new(fit) })
    }
}

#[inline]
fn soft(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}
