//! De-biased estimates, confidence intervals and the full per-coordinate
//! pipeline.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, OracleTruth};
use crate::error::{HotError, Result};
use crate::linalg::{dot, norm2};
use crate::normal;
use crate::ortho::{
    hybrid_direction, partial_penalized_direction, DirectionMethod, DirectionOptions, HybridDirection, LdpeContext,
    OrthoContext,
};
use crate::screening::{self, ScreenMethod, ScreenSet};
use crate::solvers::{scaled_lasso, universal_lambda, ScaledLassoFit, ScaledLassoOptions};

/// Estimator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// `z^T y / z^T x_j` with the hybrid direction.
    #[serde(rename = "HOT")]
    Hot,
    /// Initial estimate plus a correction along the plain lasso residual.
    #[serde(rename = "LDPE")]
    Ldpe,
    /// Initial estimate plus a correction along the hybrid direction.
    #[serde(rename = "HOT-A")]
    HotA,
    /// Same estimate as `Hot`, with the direction computed by one partially
    /// penalized lasso.
    #[serde(rename = "HOT-PP")]
    HotPartial,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Hot => "HOT",
            Method::Ldpe => "LDPE",
            Method::HotA => "HOT-A",
            Method::HotPartial => "HOT-PP",
        }
    }

    pub fn needs_screening(self) -> bool {
        self != Method::Ldpe
    }

    pub fn needs_init(self) -> bool {
        matches!(self, Method::Ldpe | Method::HotA)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub j: usize,
    pub beta_hat: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_value: f64,
    pub method: Method,
    pub tau: f64,
    pub eta: f64,
}

/// Terms of `beta_hat - beta_j = w + delta` for a known truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionDiagnostic {
    pub j: usize,
    /// Noise term `z^T eps / z^T x_j`.
    pub w: f64,
    /// Bias term from the remaining coefficients.
    pub delta: f64,
    pub identity_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub se: f64,
    pub p_value: f64,
}

fn check_inner_product(direction: &HybridDirection, data: &Dataset) -> Result<()> {
    let xj = data.x().col(direction.j);
    if direction.z_dot_xj.abs() <= 1e-12 * norm2(&direction.z) * norm2(xj) {
        return Err(HotError::DegenerateInnerProduct { j: direction.j });
    }
    Ok(())
}

/// `z^T y / z^T x_j`
pub fn hot_estimate(direction: &HybridDirection, data: &Dataset) -> Result<f64> {
    check_inner_product(direction, data)?;
    Ok(dot(&direction.z, data.y()) / direction.z_dot_xj)
}

/// `init_j + z^T (y - X init) / z^T x_j`, given the residual `y - X init`.
fn corrected_estimate(direction: &HybridDirection, data: &Dataset, init_j: f64, residual: &[f64]) -> Result<f64> {
    check_inner_product(direction, data)?;
    Ok(init_j + dot(&direction.z, residual) / direction.z_dot_xj)
}

fn init_residual(data: &Dataset, beta_init: &[f64]) -> Result<Vec<f64>> {
    if beta_init.len() != data.p() {
        return Err(HotError::DimensionMismatch(format!(
            "initial estimate has length {} for {} columns",
            beta_init.len(),
            data.p()
        )));
    }
    let fitted = data.x().mul_vec(beta_init);
    Ok(data.y().iter().zip(fitted).map(|(y, f)| y - f).collect())
}

/// LDPE estimate from the plain lasso direction and an initial estimate.
pub fn ldpe_estimate(direction: &HybridDirection, beta_init: &[f64], data: &Dataset) -> Result<f64> {
    let r = init_residual(data, beta_init)?;
    corrected_estimate(direction, data, beta_init[direction.j], &r)
}

/// Alternative hybrid estimate: the LDPE correction applied along the
/// hybrid direction.
pub fn hot_alternative_estimate(direction: &HybridDirection, beta_init: &[f64], data: &Dataset) -> Result<f64> {
    let r = init_residual(data, beta_init)?;
    corrected_estimate(direction, data, beta_init[direction.j], &r)
}

/// Normal-theory interval `beta_hat -+ q_{1 - alpha/2} sigma tau` and the
/// two-sided p-value for `beta_j = 0`.
pub fn confidence_interval(beta_hat: f64, tau: f64, sigma_hat: f64, alpha: f64) -> Result<Interval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HotError::InvalidAlpha(alpha));
    }
    if !(tau.is_finite() && tau > 0.0 && sigma_hat.is_finite() && sigma_hat > 0.0) {
        return Err(HotError::InvalidConfig(format!(
            "tau and sigma must be positive, got tau = {tau}, sigma = {sigma_hat}"
        )));
    }
    let se = sigma_hat * tau;
    let half = normal::quantile(1.0 - alpha / 2.0) * se;
    Ok(Interval {
        lower: beta_hat - half,
        upper: beta_hat + half,
        se,
        p_value: (2.0 * normal::sf(beta_hat.abs() / se)).min(1.0),
    })
}

/// Splits the estimation error into noise and bias terms. `beta_init` is the
/// initial estimate for the corrected estimators and `None` for the ratio
/// form. Columns a hybrid direction was projected against are left out of
/// the bias sum; the partially penalized route is orthogonal to them only up
/// to solver tolerance, so it keeps every term.
pub fn decompose(
    direction: &HybridDirection,
    data: &Dataset,
    truth: &OracleTruth,
    beta_hat: f64,
    beta_init: Option<&[f64]>,
) -> DecompositionDiagnostic {
    let j = direction.j;
    let x = data.x();
    let z = &direction.z;
    let denom = direction.z_dot_xj;
    let w = dot(z, &truth.noise) / denom;
    let mut skip = vec![false; data.p()];
    skip[j] = true;
    if direction.method == DirectionMethod::Hot {
        for &s in &direction.projection_set {
            skip[s] = true;
        }
    }
    let mut delta = 0.0;
    for (k, col) in x.columns().enumerate() {
        if skip[k] {
            continue;
        }
        let target = match beta_init {
            Some(init) => truth.beta[k] - init[k],
            None => truth.beta[k],
        };
        if target != 0.0 {
            delta += dot(z, col) * target / denom;
        }
    }
    let identity_gap = ((beta_hat - truth.beta[j]) - (w + delta)).abs();
    DecompositionDiagnostic { j, w, delta, identity_gap }
}

/// Where the screened set comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScreenChoice {
    Sis,
    Holp,
    User(Vec<usize>),
    None,
}

/// How the noise level is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    ScaledLasso,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub method: Method,
    pub screen: ScreenChoice,
    pub alpha: f64,
    pub direction: DirectionOptions,
    pub sigma: SigmaMode,
    /// Scaled-lasso penalty; `None` means `sqrt(2 log p / n)`.
    pub lambda0: Option<f64>,
    pub scaled: ScaledLassoOptions,
    /// Screen on the first half of the rows and infer on the second.
    pub split: bool,
    pub d_max: Option<usize>,
    pub holp_ridge: f64,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            method: Method::Hot,
            screen: ScreenChoice::Sis,
            alpha: 0.05,
            direction: DirectionOptions::default(),
            sigma: SigmaMode::ScaledLasso,
            lambda0: None,
            scaled: ScaledLassoOptions::default(),
            split: false,
            d_max: None,
            holp_ridge: 0.0,
        }
    }
}

/// Builds the screened set for `choice` on `data`.
pub fn build_screen(data: &Dataset, choice: &ScreenChoice, d_max: Option<usize>, holp_ridge: f64) -> Result<ScreenSet> {
    match choice {
        ScreenChoice::Sis => screening::screen(data, ScreenMethod::Sis, d_max, holp_ridge),
        ScreenChoice::Holp => screening::screen(data, ScreenMethod::Holp, d_max, holp_ridge),
        ScreenChoice::User(idx) => ScreenSet::user(idx, data.p(), data.n()),
        ScreenChoice::None => Ok(ScreenSet::empty(data.p())),
    }
}

/// Scaled-lasso fit at `lambda0` (default `sqrt(2 log p / n)`).
pub fn initial_fit(data: &Dataset, lambda0: Option<f64>, options: ScaledLassoOptions) -> Result<ScaledLassoFit> {
    let l0 = lambda0.unwrap_or_else(|| universal_lambda(data.n(), data.p()));
    scaled_lasso(data, l0, options)
}

/// Everything shared across coordinates for one method on one dataset.
pub struct Pipeline<'a> {
    data: &'a Dataset,
    ctx: Option<OrthoContext<'a>>,
    ldpe: Option<LdpeContext<'a>>,
    method: Method,
    alpha: f64,
    sigma_hat: f64,
    beta_init: Option<&'a [f64]>,
    residual: Option<Vec<f64>>,
    options: DirectionOptions,
}

impl<'a> Pipeline<'a> {
    /// `screen` is required for the hybrid methods and `beta_init` for the
    /// corrected ones.
    pub fn new(
        data: &'a Dataset,
        method: Method,
        screen: Option<&'a ScreenSet>,
        sigma_hat: f64,
        beta_init: Option<&'a [f64]>,
        alpha: f64,
        options: DirectionOptions,
    ) -> Result<Pipeline<'a>> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(HotError::InvalidAlpha(alpha));
        }
        let ctx = match (method.needs_screening(), screen) {
            (true, Some(s)) => Some(OrthoContext::new(data, s)?),
            (true, None) => return Err(HotError::InvalidConfig(format!("{method} needs a screened set"))),
            (false, _) => None,
        };
        let ldpe = (method == Method::Ldpe).then(|| LdpeContext::new(data));
        let residual = match (method.needs_init(), beta_init) {
            (true, Some(b)) => Some(init_residual(data, b)?),
            (true, None) => return Err(HotError::InvalidConfig(format!("{method} needs an initial estimate"))),
            (false, _) => None,
        };
        Ok(Pipeline { data, ctx, ldpe, method, alpha, sigma_hat, beta_init, residual, options })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn sigma_hat(&self) -> f64 {
        self.sigma_hat
    }

    pub fn direction(&self, j: usize) -> Result<HybridDirection> {
        match (self.method, &self.ctx, &self.ldpe) {
            (Method::Ldpe, _, Some(ldpe)) => ldpe.direction(j, &self.options),
            (Method::HotPartial, Some(ctx), _) => partial_penalized_direction(ctx, j, &self.options),
            (_, Some(ctx), _) => hybrid_direction(ctx, j, &self.options),
            _ => unreachable!("pipelines hold the context their method needs"),
        }
    }

    /// Estimate for a precomputed direction.
    pub fn estimate(&self, direction: &HybridDirection) -> Result<f64> {
        match (self.beta_init, &self.residual) {
            (Some(init), Some(r)) => corrected_estimate(direction, self.data, init[direction.j], r),
            _ => hot_estimate(direction, self.data),
        }
    }

    /// Direction, estimate and interval for coordinate `j`.
    pub fn coordinate(&self, j: usize) -> Result<(HybridDirection, InferenceResult)> {
        let direction = self.direction(j)?;
        let beta_hat = self.estimate(&direction)?;
        let ci = confidence_interval(beta_hat, direction.tau, self.sigma_hat, self.alpha)?;
        let result = InferenceResult {
            j,
            beta_hat,
            se: ci.se,
            ci_lower: ci.lower,
            ci_upper: ci.upper,
            p_value: ci.p_value,
            method: self.method,
            tau: direction.tau,
            eta: direction.eta,
        };
        Ok((direction, result))
    }

    /// Decomposition of the estimate for `direction` against `truth`.
    pub fn decompose(&self, direction: &HybridDirection, truth: &OracleTruth, beta_hat: f64) -> DecompositionDiagnostic {
        decompose(direction, self.data, truth, beta_hat, self.beta_init.filter(|_| self.method.needs_init()))
    }
}

/// One row of a report; estimate fields are `null` for failed coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub j: usize,
    pub beta_hat: Option<f64>,
    pub se: Option<f64>,
    pub ci: Option<[f64; 2]>,
    pub p_value: Option<f64>,
    pub tau: Option<f64>,
    pub eta: Option<f64>,
}

impl ReportRow {
    fn failed(j: usize) -> ReportRow {
        ReportRow { j, beta_hat: None, se: None, ci: None, p_value: None, tau: None, eta: None }
    }
}

impl From<&InferenceResult> for ReportRow {
    fn from(r: &InferenceResult) -> Self {
        ReportRow {
            j: r.j,
            beta_hat: Some(r.beta_hat),
            se: Some(r.se),
            ci: Some([r.ci_lower, r.ci_upper]),
            p_value: Some(r.p_value),
            tau: Some(r.tau),
            eta: Some(r.eta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub method: String,
    pub alpha: f64,
    pub sigma_hat: f64,
    pub results: Vec<ReportRow>,
    pub warnings: Vec<String>,
}

impl InferenceReport {
    /// Coordinates with `p_value < alpha`.
    pub fn significant(&self) -> Vec<usize> {
        self.results.iter().filter(|r| r.p_value.is_some_and(|p| p < self.alpha)).map(|r| r.j).collect()
    }

    /// Multiplies estimates, standard errors and interval ends of column `k`
    /// by `factors[k]`.
    pub fn rescaled(&self, factors: &[f64]) -> InferenceReport {
        let mut out = self.clone();
        for row in &mut out.results {
            let f = factors[row.j];
            row.beta_hat = row.beta_hat.map(|b| b * f);
            row.se = row.se.map(|s| s * f);
            row.ci = row.ci.map(|[lo, hi]| if f >= 0.0 { [lo * f, hi * f] } else { [hi * f, lo * f] });
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["j", "beta_hat", "se", "ci_lo", "ci_hi", "p_value", "tau", "eta"])?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.results {
            out.write_record([
                r.j.to_string(),
                cell(r.beta_hat),
                cell(r.se),
                cell(r.ci.map(|c| c[0])),
                cell(r.ci.map(|c| c[1])),
                cell(r.p_value),
                cell(r.tau),
                cell(r.eta),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Report plus what produced it.
#[derive(Debug, Clone)]
pub struct InferenceOutput {
    pub report: InferenceReport,
    pub results: Vec<Option<InferenceResult>>,
    pub screen: Option<ScreenSet>,
    /// Factors mapping column `k` from standardized to raw units.
    pub raw_scale: Vec<f64>,
}

/// Runs the full pipeline for every coordinate. Coordinates that fail are
/// reported with a warning; the rest are unaffected.
pub fn infer_all(data: &Dataset, config: &InferConfig) -> Result<InferenceOutput> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(HotError::InvalidAlpha(config.alpha));
    }
    let (screen_data, infer_data);
    let (screen_source, target) = if config.split {
        let (a, b) = screening::split_rows(data.n());
        screen_data = data.subset_rows(&a)?;
        infer_data = data.subset_rows(&b)?;
        (&screen_data, &infer_data)
    } else {
        (data, data)
    };

    let screen = if config.method.needs_screening() {
        Some(build_screen(screen_source, &config.screen, config.d_max, config.holp_ridge)?)
    } else {
        None
    };
    let mut warnings: Vec<String> = screen.iter().flat_map(|s| s.warnings.iter().cloned()).collect();

    let init = match (config.method.needs_init(), config.sigma) {
        (false, SigmaMode::Fixed(_)) => None,
        _ => Some(initial_fit(target, config.lambda0, config.scaled)?),
    };
    let sigma_hat = match config.sigma {
        SigmaMode::Fixed(s) => s,
        SigmaMode::ScaledLasso => init.as_ref().expect("fit above").sigma_hat,
    };
    let pipeline = Pipeline::new(
        target,
        config.method,
        screen.as_ref(),
        sigma_hat,
        init.as_ref().map(|f| f.beta_init.as_slice()),
        config.alpha,
        config.direction,
    )?;

    let outcomes: Vec<Result<InferenceResult>> =
        (0..target.p()).into_par_iter().map(|j| pipeline.coordinate(j).map(|(_, r)| r)).collect();

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut results = Vec::with_capacity(outcomes.len());
    for (j, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => {
                rows.push(ReportRow::from(&r));
                results.push(Some(r));
            }
            Err(e) => {
                warnings.push(format!("coordinate {j} failed: {e}"));
                rows.push(ReportRow::failed(j));
                results.push(None);
            }
        }
    }

    let raw_scale = (0..target.p()).map(|k| target.raw_scale_factor(k)).collect();
    Ok(InferenceOutput {
        report: InferenceReport {
            method: config.method.name().to_string(),
            alpha: config.alpha,
            sigma_hat,
            results: rows,
            warnings,
        },
        results,
        screen,
        raw_scale,
    })
}
