mod common;

use common::*;
use hotinfer::solvers::{
    gic_tune, lasso_objective, null_threshold, scaled_lasso, weighted_lasso, weighted_lasso_gram, Gram, GramProblem,
    PenaltySpec, ScaledLassoOptions, SolverOptions,
};
use hotinfer::{standardize, Matrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const TIGHT: SolverOptions = SolverOptions { tol: 1e-12, max_iter: 200_000 };

/// Enumerates every sign pattern of the penalized coordinates, solves the
/// stationarity system on the implied active set and keeps the pattern whose
/// solution is sign consistent and satisfies the inactive bounds.
fn sign_pattern_oracle(x: &Matrix, t: &[f64], pen: &PenaltySpec) -> Vec<f64> {
    let n = x.nrows() as f64;
    let q = x.ncols();
    let xa = to_na(x);
    let tv = DVector::from_column_slice(t);
    let penalized = pen.penalized();
    let m = penalized.len();
    let mut found: Vec<Vec<f64>> = Vec::new();
    for code in 0..3usize.pow(m as u32) {
        let mut signs = vec![0i8; q];
        let mut c = code;
        for &k in &penalized {
            signs[k] = (c % 3) as i8 - 1;
            c /= 3;
        }
        let active: Vec<usize> = (0..q).filter(|&k| pen.is_free(k) || signs[k] != 0).collect();
        let mut b = vec![0.0; q];
        if !active.is_empty() {
            let sub = xa.select_columns(&active);
            let lhs = sub.transpose() * &sub;
            let mut rhs = sub.transpose() * &tv;
            for (pos, &k) in active.iter().enumerate() {
                rhs[pos] -= n * pen.lambda * pen.weights[k] * signs[k] as f64;
            }
            let Some(sol) = lhs.lu().solve(&rhs) else { continue };
            for (pos, &k) in active.iter().enumerate() {
                b[k] = sol[pos];
            }
        }
        let consistent = (0..q).all(|k| pen.is_free(k) || signs[k] == 0 || b[k] * signs[k] as f64 > 0.0);
        if !consistent {
            continue;
        }
        let r = &tv - &xa * DVector::from_column_slice(&b);
        let grad = xa.transpose() * r / n;
        let feasible = (0..q).all(|k| pen.is_free(k) || signs[k] != 0 || grad[k].abs() <= pen.lambda * pen.weights[k] + 1e-12);
        if feasible {
            found.push(b);
        }
    }
    assert_eq!(found.len(), 1, "exactly one sign pattern should be feasible");
    found.pop().unwrap()
}

fn random_problem<R: Rng>(rng: &mut R, n: usize, q: usize, with_free: bool) -> (Matrix, Vec<f64>, PenaltySpec) {
    let x = gaussian_matrix(n, q, rng);
    let truth: Vec<f64> = (0..q).map(|_| if rng.random::<f64>() < 0.5 { rng.random_range(-2.0..2.0) } else { 0.0 }).collect();
    let mut t = x.mul_vec(&truth);
    for (ti, e) in t.iter_mut().zip(gaussian_vec(n, rng)) {
        *ti += e;
    }
    let weights: Vec<f64> = (0..q).map(|_| rng.random_range(0.5..1.5)).collect();
    let free_set = if with_free {
        let f = rng.random_range(1..=2.min(q - 1));
        let mut idx: Vec<usize> = (0..q).collect();
        for i in 0..f {
            let k = rng.random_range(i..q);
            idx.swap(i, k);
        }
        idx.truncate(f);
        idx
    } else {
        Vec::new()
    };
    let template = PenaltySpec { lambda: 0.0, weights, free_set };
    let lmax = null_threshold(&x, &t, &template);
    let lambda = lmax * rng.random_range(0.05..0.9);
    (x, t, template.with_lambda(lambda))
}

#[test]
fn matches_sign_pattern_oracle_on_random_instances() {
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let q = 2 + case % 5;
        let n = 20 + case % 7;
        let (x, t, pen) = random_problem(&mut r, n, q, case % 2 == 0);
        let fit = weighted_lasso(&x, &t, &pen, None, TIGHT).unwrap();
        let oracle = sign_pattern_oracle(&x, &t, &pen);
        let gap = max_abs_diff(&fit.coefficients, &oracle);
        assert!(gap <= 1e-8, "case {case}: gap {gap:e}");
        worst = worst.max(gap);
    }
    println!("largest coefficient gap {worst:.2e}");
}

#[test]
fn five_columns_with_first_free() {
    let mut r = rng(5);
    let x = gaussian_matrix(20, 5, &mut r);
    let t = gaussian_vec(20, &mut r);
    let template = PenaltySpec { lambda: 0.0, weights: vec![1.0; 5], free_set: vec![0] };
    let pen = template.with_lambda(0.3 * null_threshold(&x, &t, &template));
    let fit = weighted_lasso(&x, &t, &pen, None, TIGHT).unwrap();
    let oracle = sign_pattern_oracle(&x, &t, &pen);
    assert!(max_abs_diff(&fit.coefficients, &oracle) <= 1e-8);
}

#[test]
fn inner_product_solver_matches_oracle() {
    let mut r = rng(23);
    for case in 0..40 {
        let q = 2 + case % 5;
        let (x, t, pen) = random_problem(&mut r, 25, q, false);
        let mut cols: Vec<Vec<f64>> = x.columns().map(|c| c.to_vec()).collect();
        cols.push(t.clone());
        let full = Matrix::from_columns(25, &cols);
        let gram = Gram::new(&full);
        let idx: Vec<usize> = (0..q).collect();
        let problem = GramProblem { design: &full, gram: &gram, cols: &idx, target: q };
        let fit = weighted_lasso_gram(&problem, &pen, None, TIGHT).unwrap();
        let oracle = sign_pattern_oracle(&x, &t, &pen);
        assert!(max_abs_diff(&fit.coefficients, &oracle) <= 1e-8, "case {case}");
        let dense = weighted_lasso(&x, &t, &pen, None, TIGHT).unwrap();
        assert!(max_abs_diff(&fit.residual, &dense.residual) <= 1e-8, "case {case}");
    }
}

#[test]
fn warm_started_path_reaches_same_objective() {
    let mut r = rng(31);
    let x = gaussian_matrix(40, 25, &mut r);
    let t = gaussian_vec(40, &mut r);
    let template = PenaltySpec::uniform(0.0, 25);
    let lmax = null_threshold(&x, &t, &template);
    let mut warm: Option<Vec<f64>> = None;
    for step in 1..=10 {
        let pen = template.with_lambda(lmax * 0.8f64.powi(step));
        let cold = weighted_lasso(&x, &t, &pen, None, TIGHT).unwrap();
        let hot = weighted_lasso(&x, &t, &pen, warm.as_deref(), TIGHT).unwrap();
        let a = lasso_objective(&x, &t, &cold.coefficients, &pen);
        let b = lasso_objective(&x, &t, &hot.coefficients, &pen);
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "step {step}: {a} vs {b}");
        warm = Some(hot.coefficients);
    }
}

#[test]
fn gic_values_recompute_from_fits() {
    let mut r = rng(41);
    let (n, q) = (50, 30);
    let x = gaussian_matrix(n, q, &mut r);
    let t = gaussian_vec(n, &mut r);
    let template = PenaltySpec::uniform(0.0, q);
    let lmax = null_threshold(&x, &t, &template);
    let grid: Vec<f64> = (0..12).map(|i| 1.5 * lmax * 0.7f64.powi(i)).collect();
    let sel = gic_tune(&x, &t, &template, &grid, SolverOptions::default()).unwrap();
    let nf = n as f64;
    for point in &sel.path {
        let fit = point.fit.as_ref().unwrap();
        let supp = fit.coefficients.iter().filter(|b| **b != 0.0).count();
        let rss: f64 = fit.residual.iter().map(|e| e * e).sum();
        let expect = (rss / nf).ln() + supp as f64 * nf.ln().ln() * (q as f64).ln() / nf;
        assert!((point.gic - expect).abs() <= 1e-12, "lambda {}: {} vs {expect}", point.lambda, point.gic);
    }
    let top = &sel.path[0];
    assert_eq!(top.support, 0);
    assert!((top.rss - dot(&t, &t)).abs() <= 1e-12 * dot(&t, &t));
}

/// Square-root form of the scaled lasso: alternate a lasso at `sigma * lambda0`
/// solved by accelerated proximal gradient with the closed-form sigma update.
fn proximal_scaled_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda0: f64) -> (Vec<f64>, f64) {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let xtx = x.transpose() * x / n;
    let xty = x.transpose() * y / n;
    let step = 1.0 / xtx.symmetric_eigenvalues().max();
    let mut sigma = y.norm() / n.sqrt();
    let mut b = DVector::zeros(p);
    for _ in 0..500 {
        let lam = sigma * lambda0;
        let mut v = b.clone();
        let mut tk = 1.0f64;
        for _ in 0..20_000 {
            let grad = &xtx * &v - &xty;
            let u = &v - step * grad;
            let next = u.map(|e| e.signum() * (e.abs() - step * lam).max(0.0));
            let t_next = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
            let moved = (&next - &b).amax();
            v = &next + ((tk - 1.0) / t_next) * (&next - &b);
            b = next;
            tk = t_next;
            if moved < 1e-14 {
                break;
            }
        }
        let new_sigma = (y - x * &b).norm() / n.sqrt();
        let done = (new_sigma - sigma).abs() <= 1e-12 * sigma;
        sigma = new_sigma;
        if done {
            break;
        }
    }
    (to_vec(&b), sigma)
}

#[test]
fn scaled_lasso_matches_proximal_oracle() {
    let mut r = rng(3);
    let (n, p) = (30, 10);
    let raw = gaussian_matrix(n, p, &mut r);
    let mut beta = vec![0.0; p];
    beta[0] = 1.5;
    beta[3] = -1.0;
    beta[7] = 0.5;
    let mut y = raw.mul_vec(&beta);
    for (yi, e) in y.iter_mut().zip(gaussian_vec(n, &mut r)) {
        *yi += e;
    }
    let data = standardize(&raw, &y, false).unwrap();
    let lambda0 = hotinfer::solvers::universal_lambda(n, p);
    let opts = ScaledLassoOptions {
        tol: 1e-12,
        max_iter: 1000,
        lasso: SolverOptions { tol: 1e-13, max_iter: 100_000 },
    };
    let fit = scaled_lasso(&data, lambda0, opts).unwrap();
    let (b, sigma) = proximal_scaled_lasso(&to_na(data.x()), &DVector::from_column_slice(data.y()), lambda0);
    assert!((fit.sigma_hat - sigma).abs() <= 1e-6, "{} vs {sigma}", fit.sigma_hat);
    assert!(max_abs_diff(&fit.beta_init, &b) <= 1e-6);

    let resid: Vec<f64> = data.y().iter().zip(data.x().mul_vec(&fit.beta_init)).map(|(a, b)| a - b).collect();
    let stationary = norm2(&resid) / (n as f64).sqrt();
    assert!((fit.sigma_hat - stationary).abs() <= 1e-6 * stationary);
}
