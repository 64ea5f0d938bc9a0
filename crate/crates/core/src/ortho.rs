//! Directions `z_j` for de-biasing coordinate `j`.
//!
//! The hybrid construction first projects every candidate column onto the
//! orthogonal complement of the screened columns other than `j`
//! (`psi_k = (I - P) x_k`), then takes the residual of a weighted lasso of
//! `psi_j` on the remaining projected columns, with weights
//! `v_k = ||psi_k|| / sqrt(n)`.
//!
//! The same `z_j` is the residual of a single lasso of `x_j` on all other
//! columns in which the screened columns are left unpenalized; that route is
//! [`partial_penalized_direction`]. The plain lasso residual with no free
//! columns gives the LDPE direction.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{HotError, Result};
use crate::linalg::{dot, norm2, Matrix, PivotedQr};
use crate::screening::ScreenSet;
use std::sync::OnceLock;

use crate::solvers::{
    gic_tune_with, log_grid, null_threshold, universal_lambda, weighted_lasso, weighted_lasso_gram, Gram,
    GramProblem, GridSpec, LassoFit, PenaltySpec, SolverOptions,
};

/// How the relaxed-orthogonalization penalty `lambda_j` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Tuning {
    Fixed { lambda: f64 },
    /// `scale * sqrt(2 log p / n)`
    Universal { scale: f64 },
    Gic { grid: GridSpec },
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning::Gic { grid: GridSpec::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionMethod {
    Hot,
    Ldpe,
    PartialPenalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DirectionOptions {
    #[serde(default)]
    pub tuning: Tuning,
    #[serde(default)]
    pub solver: SolverOptions,
}

/// Columns after exact orthogonalization against `X_{S \ {j}}`.
#[derive(Debug, Clone)]
pub struct ProjectedFeatures {
    pub j: usize,
    /// Screened columns other than `j`, ascending.
    pub projection_set: Vec<usize>,
    /// Unscreened columns other than `j`, ascending.
    pub relaxed_set: Vec<usize>,
    pub psi_j: Vec<f64>,
    /// Projected columns, aligned with `relaxed_set`.
    pub psi: Matrix,
    /// `||psi_k|| / sqrt(n)`, aligned with `relaxed_set`.
    pub psi_norms: Vec<f64>,
}

impl ProjectedFeatures {
    /// Projected column `k` (for `k == j` or `k` in the relaxed set).
    pub fn psi_of(&self, k: usize) -> Option<&[f64]> {
        if k == self.j {
            return Some(&self.psi_j);
        }
        self.relaxed_set.binary_search(&k).ok().map(|pos| self.psi.col(pos))
    }

    pub fn weight_of(&self, k: usize) -> Option<f64> {
        self.relaxed_set.binary_search(&k).ok().map(|pos| self.psi_norms[pos])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridDirection {
    pub j: usize,
    pub z: Vec<f64>,
    /// `||z|| / |z^T x_j|`
    pub tau: f64,
    /// `max_{k != j} |z^T x_k| / ||z||`
    pub eta: f64,
    pub z_dot_xj: f64,
    /// Columns with a nonzero relaxed coefficient, ascending.
    pub omega_support: Vec<usize>,
    /// Coefficients aligned with `omega_support`.
    pub omega_values: Vec<f64>,
    pub lambda_j: f64,
    pub method: DirectionMethod,
    /// Columns `z` is exactly orthogonal to (empty for LDPE).
    pub projection_set: Vec<usize>,
    /// Unpenalized coefficients of the partially penalized fit, aligned
    /// with `projection_set`; empty for the other methods.
    pub free_values: Vec<f64>,
}

const RANK_TOL: f64 = 1e-10;

fn complement(p: usize, exclude: &[usize], j: usize) -> Vec<usize> {
    let mut mask = vec![false; p];
    for &k in exclude {
        mask[k] = true;
    }
    mask[j] = true;
    (0..p).filter(|&k| !mask[k]).collect()
}

fn check_index(j: usize, p: usize) -> Result<()> {
    if j >= p {
        Err(HotError::IndexOutOfRange { index: j, len: p })
    } else {
        Ok(())
    }
}

struct Projector {
    qr: Option<PivotedQr>,
}

impl Projector {
    fn new(x: &Matrix, set: &[usize]) -> Result<Projector> {
        if set.is_empty() {
            return Ok(Projector { qr: None });
        }
        if set.len() >= x.nrows() {
            return Err(HotError::InvalidConfig(format!(
                "{} screened columns leave no room for projection with n = {}",
                set.len(),
                x.nrows()
            )));
        }
        let qr = PivotedQr::new(&x.select_columns(set), RANK_TOL);
        if qr.rank() < set.len() {
            return Err(HotError::RankDeficientScreenSet { rank: qr.rank(), expected: set.len() });
        }
        Ok(Projector { qr: Some(qr) })
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.qr {
            None => v.to_vec(),
            Some(qr) => {
                let r = qr.residual(v);
                // second pass when most of v was removed
                if norm2(&r) < 0.5 * norm2(v) {
                    qr.residual(&r)
                } else {
                    r
                }
            }
        }
    }
}

fn project_columns(x: &Matrix, proj: &Projector, cols: &[usize]) -> (Matrix, Vec<f64>) {
    let n = x.nrows();
    let root_n = (n as f64).sqrt();
    let mut psi = Matrix::zeros(n, cols.len());
    let mut norms = Vec::with_capacity(cols.len());
    for (pos, &k) in cols.iter().enumerate() {
        let r = proj.apply(x.col(k));
        norms.push(norm2(&r) / root_n);
        psi.col_mut(pos).copy_from_slice(&r);
    }
    (psi, norms)
}

/// Projects `x_j` and every unscreened column onto the orthogonal
/// complement of `span(X_{S \ {j}})`.
pub fn exact_orthogonalize(data: &Dataset, screen: &ScreenSet, j: usize) -> Result<ProjectedFeatures> {
    let p = data.p();
    check_index(j, p)?;
    let x = data.x();
    let projection_set: Vec<usize> = screen.indices.iter().copied().filter(|&k| k != j).collect();
    let relaxed_set = complement(p, &screen.indices, j);
    let proj = Projector::new(x, &projection_set)?;
    let psi_j = proj.apply(x.col(j));
    let (psi, psi_norms) = project_columns(x, &proj, &relaxed_set);
    Ok(ProjectedFeatures { j, projection_set, relaxed_set, psi_j, psi, psi_norms })
}

/// Shares the projection onto `span(X_S)` across every unscreened `j`.
pub struct OrthoContext<'a> {
    data: &'a Dataset,
    screen: &'a ScreenSet,
    shared: std::result::Result<(Matrix, Vec<f64>), (usize, usize)>,
    unscreened: Vec<usize>,
    gram: OnceLock<Gram>,
}

impl<'a> OrthoContext<'a> {
    pub fn new(data: &'a Dataset, screen: &'a ScreenSet) -> Result<OrthoContext<'a>> {
        let p = data.p();
        if let Some(&k) = screen.indices.iter().find(|&&k| k >= p) {
            return Err(HotError::IndexOutOfRange { index: k, len: p });
        }
        let mask = screen.mask(p);
        let unscreened: Vec<usize> = (0..p).filter(|&k| !mask[k]).collect();
        let shared = match Projector::new(data.x(), &screen.indices) {
            Ok(proj) => Ok(project_columns(data.x(), &proj, &unscreened)),
            Err(HotError::RankDeficientScreenSet { rank, expected }) => Err((rank, expected)),
            Err(e) => return Err(e),
        };
        Ok(OrthoContext { data, screen, shared, unscreened, gram: OnceLock::new() })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn screen(&self) -> &ScreenSet {
        self.screen
    }

    fn shared(&self) -> Result<&(Matrix, Vec<f64>)> {
        self.shared
            .as_ref()
            .map_err(|&(rank, expected)| HotError::RankDeficientScreenSet { rank, expected })
    }

    /// Same result as [`exact_orthogonalize`], reusing the shared projection
    /// when `j` is unscreened.
    pub fn features(&self, j: usize) -> Result<ProjectedFeatures> {
        check_index(j, self.data.p())?;
        if self.screen.contains(j) {
            return exact_orthogonalize(self.data, self.screen, j);
        }
        let (psi_all, norms_all) = self.shared()?;
        let jpos = self.unscreened.binary_search(&j).expect("unscreened column");
        let keep: Vec<usize> = (0..self.unscreened.len()).filter(|&pos| pos != jpos).collect();
        Ok(ProjectedFeatures {
            j,
            projection_set: self.screen.indices.clone(),
            relaxed_set: keep.iter().map(|&pos| self.unscreened[pos]).collect(),
            psi_j: psi_all.col(jpos).to_vec(),
            psi: psi_all.select_columns(&keep),
            psi_norms: keep.iter().map(|&pos| norms_all[pos]).collect(),
        })
    }
}

/// Fits at the penalty chosen by `tuning`. `solve(penalty, warm)` fits one
/// penalty level and `lmax` is the null threshold of the problem.
fn tuned_fit(
    template: &PenaltySpec,
    options: &DirectionOptions,
    n: usize,
    p: usize,
    lmax: impl FnOnce() -> f64,
    mut solve: impl FnMut(&PenaltySpec, Option<&[f64]>) -> Result<LassoFit>,
) -> Result<LassoFit> {
    match options.tuning {
        Tuning::Fixed { lambda } => solve(&template.with_lambda(lambda), None),
        Tuning::Universal { scale } => solve(&template.with_lambda(scale * universal_lambda(n, p)), None),
        Tuning::Gic { grid } => Ok(gic_tune_with(n, template, &log_grid(lmax(), grid), solve)?.fit),
    }
}

fn tuned_dense(design: &Matrix, target: &[f64], template: &PenaltySpec, options: &DirectionOptions, p: usize) -> Result<LassoFit> {
    tuned_fit(
        template,
        options,
        design.nrows(),
        p,
        || null_threshold(design, target, template),
        |pen, warm| weighted_lasso(design, target, pen, warm, options.solver),
    )
}

fn tuned_gram(problem: &GramProblem<'_>, template: &PenaltySpec, options: &DirectionOptions, p: usize) -> Result<LassoFit> {
    tuned_fit(
        template,
        options,
        problem.gram.nrows(),
        p,
        || problem.null_threshold(template),
        |pen, warm| weighted_lasso_gram(problem, pen, warm, options.solver),
    )
}

struct Relaxed {
    z: Vec<f64>,
    lambda: f64,
    support: Vec<usize>,
    values: Vec<f64>,
}

fn finalize(data: &Dataset, j: usize, relaxed: Relaxed, method: DirectionMethod, projection_set: Vec<usize>) -> Result<HybridDirection> {
    let x = data.x();
    let z = relaxed.z;
    let znorm = norm2(&z);
    if znorm <= 1e-10 * (data.n() as f64).sqrt() {
        return Err(HotError::DegenerateDirection { j, norm: znorm });
    }
    let z_dot_xj = dot(&z, x.col(j));
    let mut worst = 0.0f64;
    for (k, col) in x.columns().enumerate() {
        if k != j {
            worst = worst.max(dot(&z, col).abs());
        }
    }
    Ok(HybridDirection {
        j,
        tau: znorm / z_dot_xj.abs(),
        eta: worst / znorm,
        z_dot_xj,
        omega_support: relaxed.support,
        omega_values: relaxed.values,
        lambda_j: relaxed.lambda,
        method,
        z,
        projection_set,
        free_values: Vec::new(),
    })
}

fn nonzero_support(coefficients: &[f64], columns: &[usize], skip: &[bool]) -> (Vec<usize>, Vec<f64>) {
    let mut support = Vec::new();
    let mut values = Vec::new();
    for (pos, &b) in coefficients.iter().enumerate() {
        if b != 0.0 && !skip[pos] {
            support.push(columns[pos]);
            values.push(b);
        }
    }
    (support, values)
}

/// Two-step hybrid direction from precomputed projected features.
pub fn hybrid_from_features(data: &Dataset, f: ProjectedFeatures, options: &DirectionOptions) -> Result<HybridDirection> {
    let j = f.j;
    if f.relaxed_set.is_empty() {
        let relaxed = Relaxed { z: f.psi_j, lambda: 0.0, support: Vec::new(), values: Vec::new() };
        return finalize(data, j, relaxed, DirectionMethod::Hot, f.projection_set);
    }
    let template = PenaltySpec { lambda: 0.0, weights: f.psi_norms.clone(), free_set: Vec::new() };
    let fit = tuned_dense(&f.psi, &f.psi_j, &template, options, data.p())?;
    let skip = vec![false; f.relaxed_set.len()];
    let (support, values) = nonzero_support(&fit.coefficients, &f.relaxed_set, &skip);
    let relaxed = Relaxed { z: fit.residual, lambda: fit.lambda_used, support, values };
    finalize(data, j, relaxed, DirectionMethod::Hot, f.projection_set)
}

/// Relaxed step on freshly projected features, solved from their inner
/// products. Same result as [`hybrid_from_features`].
fn hybrid_from_features_gram(data: &Dataset, f: ProjectedFeatures, options: &DirectionOptions) -> Result<HybridDirection> {
    let q = f.relaxed_set.len();
    if q == 0 {
        return hybrid_from_features(data, f, options);
    }
    let mut columns: Vec<&[f64]> = f.psi.columns().collect();
    columns.push(&f.psi_j);
    let design = Matrix::from_columns(data.n(), &columns);
    let gram = Gram::new(&design);
    let cols: Vec<usize> = (0..q).collect();
    let template = PenaltySpec { lambda: 0.0, weights: f.psi_norms.clone(), free_set: Vec::new() };
    let problem = GramProblem { design: &design, gram: &gram, cols: &cols, target: q };
    let fit = tuned_gram(&problem, &template, options, data.p())?;
    let skip = vec![false; q];
    let (support, values) = nonzero_support(&fit.coefficients, &f.relaxed_set, &skip);
    let relaxed = Relaxed { z: fit.residual, lambda: fit.lambda_used, support, values };
    finalize(data, f.j, relaxed, DirectionMethod::Hot, f.projection_set)
}

/// Hybrid direction for coordinate `j`. Unscreened coordinates share one
/// projected design; every relaxed step is solved from inner products.
pub fn hybrid_direction(ctx: &OrthoContext<'_>, j: usize, options: &DirectionOptions) -> Result<HybridDirection> {
    check_index(j, ctx.data.p())?;
    if ctx.screen.contains(j) || ctx.unscreened.len() < 2 {
        return hybrid_from_features_gram(ctx.data, ctx.features(j)?, options);
    }
    let (psi_all, norms_all) = ctx.shared()?;
    let gram = ctx.gram.get_or_init(|| Gram::new(psi_all));
    let jpos = ctx.unscreened.binary_search(&j).expect("unscreened column");
    let cols: Vec<usize> = (0..ctx.unscreened.len()).filter(|&pos| pos != jpos).collect();
    let template =
        PenaltySpec { lambda: 0.0, weights: cols.iter().map(|&pos| norms_all[pos]).collect(), free_set: Vec::new() };
    let problem = GramProblem { design: psi_all, gram, cols: &cols, target: jpos };
    let fit = tuned_gram(&problem, &template, options, ctx.data.p())?;
    let relaxed_set: Vec<usize> = cols.iter().map(|&pos| ctx.unscreened[pos]).collect();
    let skip = vec![false; cols.len()];
    let (support, values) = nonzero_support(&fit.coefficients, &relaxed_set, &skip);
    let relaxed = Relaxed { z: fit.residual, lambda: fit.lambda_used, support, values };
    finalize(ctx.data, j, relaxed, DirectionMethod::Hot, ctx.screen.indices.clone())
}

/// The same direction as [`hybrid_direction`], computed as the residual of
/// one lasso of `x_j` on `X_{-j}` with the screened columns unpenalized and
/// the projected-norm weights on the rest.
pub fn partial_penalized_direction(
    ctx: &OrthoContext<'_>,
    j: usize,
    options: &DirectionOptions,
) -> Result<HybridDirection> {
    let data = ctx.data;
    let f = ctx.features(j)?;
    let p = data.p();
    let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
    let design = data.x().select_columns(&others);
    let mut weights = vec![1.0; others.len()];
    let mut free_set = Vec::with_capacity(f.projection_set.len());
    let mut free_mask = vec![false; others.len()];
    for (pos, &k) in others.iter().enumerate() {
        if let Some(w) = f.weight_of(k) {
            weights[pos] = w;
        } else {
            free_set.push(pos);
            free_mask[pos] = true;
        }
    }
    let template = PenaltySpec { lambda: 0.0, weights, free_set };
    let fit = tuned_dense(&design, data.x().col(j), &template, options, p)?;
    let (support, values) = nonzero_support(&fit.coefficients, &others, &free_mask);
    let free_values = template.free_set.iter().map(|&pos| fit.coefficients[pos]).collect();
    let relaxed = Relaxed { z: fit.residual, lambda: fit.lambda_used, support, values };
    let mut dir = finalize(data, j, relaxed, DirectionMethod::PartialPenalized, f.projection_set)?;
    dir.free_values = free_values;
    Ok(dir)
}

/// LDPE direction: residual of the lasso of `x_j` on `X_{-j}` with weights
/// `||x_k|| / sqrt(n)` (all one on standardized data).
pub fn ldpe_direction(data: &Dataset, j: usize, options: &DirectionOptions) -> Result<HybridDirection> {
    let p = data.p();
    check_index(j, p)?;
    let x = data.x();
    let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
    let design = x.select_columns(&others);
    let root_n = (data.n() as f64).sqrt();
    let weights = others.iter().map(|&k| norm2(x.col(k)) / root_n).collect();
    let template = PenaltySpec { lambda: 0.0, weights, free_set: Vec::new() };
    let fit = tuned_dense(&design, x.col(j), &template, options, p)?;
    let skip = vec![false; others.len()];
    let (support, values) = nonzero_support(&fit.coefficients, &others, &skip);
    let relaxed = Relaxed { z: fit.residual, lambda: fit.lambda_used, support, values };
    finalize(data, j, relaxed, DirectionMethod::Ldpe, Vec::new())
}

/// Inner products of the full design, shared by every LDPE direction.
pub struct LdpeContext<'a> {
    data: &'a Dataset,
    gram: Gram,
    weights: Vec<f64>,
}

impl<'a> LdpeContext<'a> {
    pub fn new(data: &'a Dataset) -> LdpeContext<'a> {
        let root_n = (data.n() as f64).sqrt();
        let weights = data.x().columns().map(|c| norm2(c) / root_n).collect();
        LdpeContext { data, gram: Gram::new(data.x()), weights }
    }

    /// Same direction as [`ldpe_direction`], solved from inner products.
    pub fn direction(&self, j: usize, options: &DirectionOptions) -> Result<HybridDirection> {
        let data = self.data;
        let p = data.p();
        check_index(j, p)?;
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let template =
            PenaltySpec { lambda: 0.0, weights: others.iter().map(|&k| self.weights[k]).collect(), free_set: Vec::new() };
        let problem = GramProblem { design: data.x(), gram: &self.gram, cols: &others, target: j };
        let fit = tuned_gram(&problem, &template, options, p)?;
        let skip = vec![false; others.len()];
        let (support, values) = nonzero_support(&fit.coefficients, &others, &skip);
        let relaxed = Relaxed { z: fit.residual, lambda: fit.lambda_used, support, values };
        finalize(data, j, relaxed, DirectionMethod::Ldpe, Vec::new())
    }
}
