//! Pre-screening of identifiable predictors.
//!
//! A ranking of all columns is produced by marginal correlation (SIS) or by
//! the high-dimensional OLS projection (HOLP); the screened set is then the
//! ranking prefix whose least-squares fit minimizes BIC.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{HotError, Result};
use crate::linalg::{axpy, dot, norm2, Cholesky, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScreenMethod {
    Sis,
    Holp,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSet {
    /// Screened column indices, ascending.
    pub indices: Vec<usize>,
    pub method: ScreenMethod,
    /// Permutation of all columns; `indices` is the set of its first `d`.
    pub ranking: Vec<usize>,
    pub d: usize,
    /// BIC of each nested prefix size 1..=d_max; `None` where the prefix was
    /// rank deficient. Empty for user-supplied sets.
    pub bic_path: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

impl ScreenSet {
    /// Builds a set from user-chosen indices, which must be distinct, in
    /// range and fewer than `n`.
    pub fn user(indices: &[usize], p: usize, n: usize) -> Result<ScreenSet> {
        let mut seen = vec![false; p];
        for &k in indices {
            if k >= p {
                return Err(HotError::IndexOutOfRange { index: k, len: p });
            }
            if seen[k] {
                return Err(HotError::InvalidConfig(format!("index {k} repeated in screened set")));
            }
            seen[k] = true;
        }
        if indices.len() >= n {
            return Err(HotError::InvalidConfig(format!(
                "screened set has {} columns but must be smaller than n = {n}",
                indices.len()
            )));
        }
        let mut ranking = indices.to_vec();
        ranking.extend((0..p).filter(|&k| !seen[k]));
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        Ok(ScreenSet {
            d: sorted.len(),
            indices: sorted,
            method: ScreenMethod::User,
            ranking,
            bic_path: Vec::new(),
            warnings: Vec::new(),
        })
    }

    /// An empty screened set (every column goes to the relaxed step).
    pub fn empty(p: usize) -> ScreenSet {
        ScreenSet {
            indices: Vec::new(),
            method: ScreenMethod::User,
            ranking: (0..p).collect(),
            d: 0,
            bic_path: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    /// Membership mask over all `p` columns.
    pub fn mask(&self, p: usize) -> Vec<bool> {
        let mut m = vec![false; p];
        for &k in &self.indices {
            m[k] = true;
        }
        m
    }
}

/// Orders columns by descending score, breaking ties by ascending index.
fn rank_by_magnitude(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps ascending index order among exact ties
    order.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()));
    order
}

/// Sure independence screening: rank by `|x_k^T y|`.
pub fn sis_rank(data: &Dataset) -> Vec<usize> {
    let scores = data.x().tr_mul_vec(data.y());
    rank_by_magnitude(&scores)
}

/// HOLP coefficients `X^T (X X^T + ridge I)^{-1} y`.
///
/// Centered columns leave `X X^T` singular along the ones vector. For a
/// standardized dataset `1 1^T` is added to the system, which restores
/// invertibility without changing the coefficients because `X^T 1 = 0` and
/// `y` is centered.
pub fn holp_coefficients(data: &Dataset, ridge_eps: f64) -> Result<Vec<f64>> {
    if !(ridge_eps.is_finite() && ridge_eps >= 0.0) {
        return Err(HotError::InvalidConfig(format!("ridge must be finite and >= 0, got {ridge_eps}")));
    }
    let mut gram = data.x().outer_gram();
    let shift = if data.is_standardized() { 1.0 } else { 0.0 };
    for a in 0..data.n() {
        for b in 0..data.n() {
            gram.set(a, b, gram.get(a, b) + shift);
        }
        gram.set(a, a, gram.get(a, a) + ridge_eps);
    }
    let chol = Cholesky::new(&gram).ok_or(HotError::SingularGram)?;
    let u = chol.solve(data.y());
    Ok(data.x().tr_mul_vec(&u))
}

/// High-dimensional OLS projection screening: rank by `|beta_holp_k|`.
pub fn holp_rank(data: &Dataset, ridge_eps: f64) -> Result<Vec<usize>> {
    Ok(rank_by_magnitude(&holp_coefficients(data, ridge_eps)?))
}

/// `floor(n / 2)`, capped at `n - 2` and at least 1. BIC does the actual
/// size selection; the cap only keeps the least-squares fits well posed.
pub fn default_d_max(n: usize) -> usize {
    (n / 2).min(n.saturating_sub(2)).max(1)
}

/// Residual sums of squares below this fraction of `||y||^2` are treated as
/// an exact fit.
const EXACT_FIT_RSS: f64 = 1e-20;

/// `n log(RSS / n) + d log n`
pub fn bic_value(rss: f64, d: usize, n: usize) -> f64 {
    let nf = n as f64;
    nf * (rss / nf).ln() + d as f64 * nf.ln()
}

fn check_permutation(ranking: &[usize], p: usize) -> Result<()> {
    if ranking.len() != p {
        return Err(HotError::DimensionMismatch(format!("ranking has {} entries for {p} columns", ranking.len())));
    }
    let mut seen = vec![false; p];
    for &k in ranking {
        if k >= p {
            return Err(HotError::IndexOutOfRange { index: k, len: p });
        }
        if seen[k] {
            return Err(HotError::InvalidConfig(format!("ranking repeats column {k}")));
        }
        seen[k] = true;
    }
    Ok(())
}

/// Chooses the ranking prefix size in `1..=d_max` minimizing BIC of the OLS
/// fit on that prefix. Ties go to the smaller size.
///
/// Prefixes are orthogonalized incrementally (Gram-Schmidt with one
/// reorthogonalization pass). Once a prefix becomes rank deficient every
/// longer prefix is too, so those sizes are skipped with a warning.
pub fn bic_select(data: &Dataset, ranking: &[usize], d_max: usize, method: ScreenMethod) -> Result<ScreenSet> {
    let n = data.n();
    let p = data.p();
    check_permutation(ranking, p)?;
    if d_max == 0 || d_max >= n {
        return Err(HotError::InvalidConfig(format!("d_max must satisfy 1 <= d_max < n = {n}, got {d_max}")));
    }
    let d_max = d_max.min(p);
    let x = data.x();
    let y = data.y();
    let floor = EXACT_FIT_RSS * dot(y, y).max(f64::MIN_POSITIVE);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d_max);
    let mut residual = y.to_vec();
    let mut bic_path = Vec::with_capacity(d_max);
    let mut warnings = Vec::new();
    let mut best: Option<(usize, f64)> = None;

    for d in 1..=d_max {
        let col = x.col(ranking[d - 1]);
        let mut v = col.to_vec();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
            }
        }
        let vn = norm2(&v);
        if vn <= 1e-10 * norm2(col).max(f64::MIN_POSITIVE) {
            warnings.push(format!(
                "prefix sizes {d}..={d_max} skipped: column {} is collinear with higher-ranked columns",
                ranking[d - 1]
            ));
            bic_path.extend(std::iter::repeat_n(None, d_max - d + 1));
            break;
        }
        v.iter_mut().for_each(|e| *e /= vn);
        let c = dot(&v, &residual);
        axpy(-c, &v, &mut residual);
        basis.push(v);
        let rss = dot(&residual, &residual).max(floor);
        let bic = bic_value(rss, d, n);
        bic_path.push(Some(bic));
        if best.is_none_or(|(_, b)| bic < b) {
            best = Some((d, bic));
        }
    }

    let (d, _) = best.ok_or(HotError::AllRankDeficient)?;
    let mut indices = ranking[..d].to_vec();
    indices.sort_unstable();
    Ok(ScreenSet { indices, method, ranking: ranking.to_vec(), d, bic_path, warnings })
}

/// Ranks with `method` and selects the prefix size by BIC.
pub fn screen(data: &Dataset, method: ScreenMethod, d_max: Option<usize>, holp_ridge: f64) -> Result<ScreenSet> {
    let ranking = match method {
        ScreenMethod::Sis => sis_rank(data),
        ScreenMethod::Holp => holp_rank(data, holp_ridge)?,
        ScreenMethod::User => {
            return Err(HotError::InvalidConfig("user-supplied sets are built with ScreenSet::user".into()))
        }
    };
    bic_select(data, &ranking, d_max.unwrap_or_else(|| default_d_max(data.n())), method)
}

/// Row halves for independent screening: the first `floor(n/2)` rows screen,
/// the remaining rows are used for inference.
pub fn split_rows(n: usize) -> (Vec<usize>, Vec<usize>) {
    let half = n / 2;
    ((0..half).collect(), (half..n).collect())
}

/// Matrix of the screened columns, in ascending index order.
pub fn screened_columns(data: &Dataset, set: &ScreenSet) -> Matrix {
    data.x().select_columns(&set.indices)
}
