#![allow(dead_code)]

use hotinfer::{standardize, Dataset, Matrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: Rng>(n: usize, q: usize, rng: &mut R) -> Matrix {
    let data: Vec<f64> = (0..n * q).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_col_major(n, q, data)
}

pub fn gaussian_vec<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.nrows(), m.ncols(), m.as_col_major())
}

pub fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Standardized AR(1) design with response `x beta + sigma * eps`.
pub fn ar1_dataset(n: usize, p: usize, rho: f64, beta: &[f64], sigma: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x = hotinfer::simulation::gen_design(n, p, rho, &mut r);
    let mut y = x.mul_vec(beta);
    for yi in y.iter_mut() {
        let e: f64 = r.sample(StandardNormal);
        *yi += sigma * e;
    }
    standardize(&x, &y, false).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
