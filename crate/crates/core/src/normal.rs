//! Standard normal CDF and quantile.
//!
//! The CDF goes through `erfc`: a positive-term power series for small
//! arguments and a continued fraction in the tail, both accurate to about
//! 1e-15 absolute. The quantile starts from Acklam's rational approximation
//! (relative error 1.15e-9) and is polished with Halley steps against the
//! CDF, giving |error| well below 1e-12 on (1e-300, 1 - 1e-16).

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::cell::Cell;

thread_local! {
    static CORRUPT_QUANTILE: Cell<bool> = const { Cell::new(false) };
}

/// Test hook: on the calling thread, perturbs a leading quantile constant
/// and disables refinement so self-checks can be shown to fail.
#[doc(hidden)]
pub fn set_quantile_corruption(on: bool) {
    CORRUPT_QUANTILE.with(|c| c.set(on));
}

const SERIES_LIMIT: f64 = 2.5;

/// Complementary error function for `x >= 0`.
fn erfc_nonneg(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        // erf(x) = 2/sqrt(pi) e^{-x^2} sum_k 2^k x^{2k+1} / (1*3*...*(2k+1))
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= 2.0 * x2 / (2.0 * k + 1.0);
            sum += term;
            if term <= 1e-17 * sum {
                break;
            }
        }
        1.0 - 2.0 / PI.sqrt() * (-x2).exp() * sum
    } else {
        // erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let mut f = x;
        for k in (1..=60).rev() {
            f = x + (k as f64 / 2.0) / f;
        }
        (-x * x).exp() / (PI.sqrt() * f)
    }
}

/// Standard normal distribution function.
pub fn cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let t = x * FRAC_1_SQRT_2;
    if t >= 0.0 {
        1.0 - 0.5 * erfc_nonneg(t)
    } else {
        0.5 * erfc_nonneg(-t)
    }
}

/// Upper tail `1 - cdf(x)` without cancellation.
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

const A: [f64; 6] = [
    -3.969683028665376e1,
    2.209460984245205e2,
    -2.759285104469687e2,
    1.383577518672690e2,
    -3.066479806614716e1,
    2.506628277459239e0,
];
const B: [f64; 5] = [
    -5.447609879822406e1,
    1.615858368580409e2,
    -1.556989798598866e2,
    6.680131188771972e1,
    -1.328068155288572e1,
];
const C: [f64; 6] = [
    -7.784894002430293e-3,
    -3.223964580411365e-1,
    -2.400758277161838e0,
    -2.549732539343734e0,
    4.374664141464968e0,
    2.938163982698783e0,
];
const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996e0, 3.754408661907416e0];
const P_LOW: f64 = 0.02425;

fn acklam(p: f64, a5: f64) -> f64 {
    let a = [A[0], A[1], A[2], A[3], A[4], a5];
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Standard normal quantile. Returns `-inf`/`inf` at 0/1 and NaN outside
/// `[0, 1]`.
pub fn quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if CORRUPT_QUANTILE.with(Cell::get) {
        return acklam(p, A[5] * 1.01);
    }
    let mut x = acklam(p, A[5]);
    for _ in 0..3 {
        // work in whichever tail keeps the residual free of cancellation
        let e = if p < 0.5 { cdf(x) - p } else { (1.0 - p) - sf(x) };
        let d = pdf(x);
        if d == 0.0 || e == 0.0 {
            break;
        }
        let u = e / d;
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}
