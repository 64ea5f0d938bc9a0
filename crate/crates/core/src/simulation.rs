//! Synthetic AR(1) designs, coefficient patterns and Monte-Carlo coverage
//! campaigns.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{standardize, Dataset, OracleTruth};
use crate::error::{HotError, Result};
use crate::inference::{build_screen, initial_fit, Method, Pipeline, ScreenChoice};
use crate::linalg::{Cholesky, Matrix};
use crate::ortho::DirectionOptions;
use crate::screening::{ScreenMethod, ScreenSet};
use crate::solvers::{universal_lambda, ScaledLassoFit, ScaledLassoOptions};

/// Draws `n` rows with covariance `rho^{|j-k|}` through the AR(1) recursion
/// `x_1 ~ N(0,1)`, `x_{k+1} = rho x_k + sqrt(1 - rho^2) N(0,1)`.
pub fn gen_design<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> Matrix {
    let innovation = (1.0 - rho * rho).sqrt();
    let mut x = Matrix::zeros(n, p);
    for i in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        x.set(i, 0, prev);
        for k in 1..p {
            let e: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innovation * e;
            x.set(i, k, prev);
        }
    }
    x
}

/// Diagonal of the inverse of the `p x p` AR(1) covariance, by dense
/// inversion.
pub fn precision_diag(rho: f64, p: usize) -> Vec<f64> {
    let mut sigma = Matrix::zeros(p, p);
    for r in 0..p {
        for c in 0..p {
            sigma.set(r, c, rho.powi((r as i32 - c as i32).abs()));
        }
    }
    let inv = Cholesky::new(&sigma).expect("AR(1) covariance is positive definite").inverse();
    (0..p).map(|k| inv.get(k, k)).collect()
}

/// True coefficient patterns. Spike indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Pattern {
    /// The first `s` coefficients drawn from `U[lo, hi]`, the rest zero.
    SparseUniform { s: usize, lo: f64, hi: f64 },
    /// `spike_scale * lambda_univ` at the spikes and
    /// `decay_scale * lambda_univ / j^2` elsewhere.
    ApproxSparse { spike_indices: Vec<usize>, spike_scale: f64, decay_scale: f64 },
}

impl Pattern {
    /// Spikes at 200, 400, ... up to `p`, both scales 3.
    pub fn approx_sparse_default(p: usize) -> Pattern {
        Pattern::ApproxSparse {
            spike_indices: (1..=p / 200).map(|m| 200 * m).collect(),
            spike_scale: 3.0,
            decay_scale: 3.0,
        }
    }

    /// 0-based indices of the designated strong coefficients.
    pub fn strong_set(&self, p: usize) -> Vec<usize> {
        match self {
            Pattern::SparseUniform { s, .. } => (0..(*s).min(p)).collect(),
            Pattern::ApproxSparse { spike_indices, .. } => {
                let mut v: Vec<usize> = spike_indices.iter().map(|&j| j - 1).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        match self {
            Pattern::SparseUniform { s, lo, hi } => {
                if *s > p {
                    return Err(HotError::InvalidPattern(format!("s = {s} exceeds p = {p}")));
                }
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(HotError::InvalidPattern(format!("need finite lo <= hi, got [{lo}, {hi}]")));
                }
            }
            Pattern::ApproxSparse { spike_indices, spike_scale, decay_scale } => {
                if let Some(j) = spike_indices.iter().find(|&&j| j == 0 || j > p) {
                    return Err(HotError::InvalidPattern(format!("spike index {j} outside 1..={p}")));
                }
                if !(spike_scale.is_finite() && decay_scale.is_finite()) {
                    return Err(HotError::InvalidPattern("scales must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

pub fn gen_coefficients<R: Rng + ?Sized>(pattern: &Pattern, p: usize, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    pattern.validate(p)?;
    let mut beta = vec![0.0; p];
    match pattern {
        Pattern::SparseUniform { s, lo, hi } => {
            for b in beta.iter_mut().take(*s) {
                let u: f64 = rng.random();
                *b = lo + (hi - lo) * u;
            }
        }
        Pattern::ApproxSparse { spike_indices, spike_scale, decay_scale } => {
            let lu = universal_lambda(n, p);
            for (k, b) in beta.iter_mut().enumerate() {
                let j = (k + 1) as f64;
                *b = decay_scale * lu / (j * j);
            }
            for &j in spike_indices {
                beta[j - 1] = spike_scale * lu;
            }
        }
    }
    Ok(beta)
}

/// Estimator plus where its screened set comes from. Written as `LDPE`,
/// `HOT`, `HOT-A` or `HOT-PP`, optionally followed by `-SIS`/`-HOLP` and a
/// trailing `(I)` for screening on an independent dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MethodSpec {
    pub method: Method,
    pub screen: Option<ScreenMethod>,
    pub independent: Option<bool>,
}

impl FromStr for MethodSpec {
    type Err = HotError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || HotError::InvalidConfig(format!("unknown method '{s}'"));
        let mut rest = s.trim().to_ascii_uppercase();
        let mut independent = None;
        if let Some(stripped) = rest.strip_suffix("(I)") {
            rest = stripped.to_string();
            independent = Some(true);
        }
        let mut screen = None;
        for (suffix, m) in [("-SIS", ScreenMethod::Sis), ("-HOLP", ScreenMethod::Holp)] {
            if let Some(stripped) = rest.strip_suffix(suffix) {
                rest = stripped.to_string();
                screen = Some(m);
                break;
            }
        }
        let method = match rest.as_str() {
            "HOT" => Method::Hot,
            "HOT-A" => Method::HotA,
            "HOT-PP" => Method::HotPartial,
            "LDPE" => Method::Ldpe,
            _ => return Err(bad()),
        };
        if method == Method::Ldpe && (screen.is_some() || independent.is_some()) {
            return Err(bad());
        }
        Ok(MethodSpec { method, screen, independent })
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.method.name())?;
        match self.screen {
            Some(ScreenMethod::Sis) => f.write_str("-SIS")?,
            Some(ScreenMethod::Holp) => f.write_str("-HOLP")?,
            _ => {}
        }
        if self.independent == Some(true) {
            f.write_str("(I)")?;
        }
        Ok(())
    }
}

impl TryFrom<String> for MethodSpec {
    type Error = HotError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MethodSpec> for String {
    fn from(m: MethodSpec) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScreenMode {
    Reuse,
    Split,
}

/// Default screening for methods that do not name one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningSpec {
    pub method: ScreenMethod,
    pub mode: ScreenMode,
}

impl Default for ScreeningSpec {
    fn default() -> Self {
        ScreeningSpec { method: ScreenMethod::Sis, mode: ScreenMode::Reuse }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SigmaSpec {
    ScaledLasso,
    Fixed { value: f64 },
}

fn default_alpha() -> f64 {
    0.05
}

fn default_methods() -> Vec<MethodSpec> {
    vec!["HOT".parse().expect("valid"), "LDPE".parse().expect("valid")]
}

fn default_sigma() -> SigmaSpec {
    SigmaSpec::ScaledLasso
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub sigma: f64,
    pub pattern: Pattern,
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub screening: ScreeningSpec,
    #[serde(default = "default_sigma")]
    pub sigma_mode: SigmaSpec,
    #[serde(default)]
    pub direction: DirectionOptions,
    #[serde(default)]
    pub lambda0: Option<f64>,
    #[serde(default)]
    pub d_max: Option<usize>,
    /// 1-based indices scored by `cp_max`; defaults to the pattern's
    /// nonzero block or spikes.
    #[serde(default)]
    pub cp_max_set: Option<Vec<usize>>,
    /// Parallelize over coordinates within a replication instead of over
    /// replications.
    #[serde(default)]
    pub parallel_coordinates: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HotError::InvalidConfig(m));
        if self.n < 4 || self.p < 2 {
            return bad(format!("need n >= 4 and p >= 2, got n = {}, p = {}", self.n, self.p));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HotError::InvalidAlpha(self.alpha));
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if let SigmaSpec::Fixed { value } = self.sigma_mode {
            if !(value.is_finite() && value > 0.0) {
                return bad(format!("fixed sigma must be positive, got {value}"));
            }
        }
        if let Some(set) = &self.cp_max_set {
            if let Some(j) = set.iter().find(|&&j| j == 0 || j > self.p) {
                return bad(format!("cp_max_set index {j} outside 1..={}", self.p));
            }
        }
        self.pattern.validate(self.p)
    }

    fn strong_set(&self) -> Vec<usize> {
        match &self.cp_max_set {
            Some(set) => {
                let mut v: Vec<usize> = set.iter().map(|&j| j - 1).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
            None => self.pattern.strong_set(self.p),
        }
    }

    fn resolve(&self, spec: &MethodSpec) -> (ScreenMethod, bool) {
        let method = spec.screen.unwrap_or(self.screening.method);
        let independent = spec.independent.unwrap_or(self.screening.mode == ScreenMode::Split);
        (method, independent)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep` under master seed `seed`.
pub fn child_seed(seed: u64, rep: usize) -> u64 {
    splitmix64(seed ^ splitmix64(rep as u64))
}

/// One coordinate of one replication, in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: String,
    pub j: usize,
    pub beta_true: f64,
    pub beta_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub covered: bool,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub cp_all: f64,
    pub cp_max: f64,
    pub mean_length: f64,
    pub mean_sigma_hat: f64,
    pub coordinates_failed: usize,
    pub max_identity_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimConfig,
    pub lambda_univ: f64,
    pub reps_completed: usize,
    pub reps_failed: usize,
    pub methods: Vec<MethodSummary>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub records: Vec<RepRecord>,
}

impl SimulationReport {
    pub fn write_records_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One simulated dataset with its truth in standardized coordinates.
pub struct SimulatedData {
    pub data: Dataset,
    pub truth: OracleTruth,
    /// Raw-scale coefficients.
    pub beta_raw: Vec<f64>,
}

fn simulate_dataset<R: Rng + ?Sized>(config: &SimConfig, beta: &[f64], rng: &mut R) -> Result<SimulatedData> {
    let x = gen_design(config.n, config.p, config.rho, rng);
    let noise: Vec<f64> = (0..config.n).map(|_| config.sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut y = x.mul_vec(beta);
    for (yi, e) in y.iter_mut().zip(&noise) {
        *yi += e;
    }
    let data = standardize(&x, &y, false)?;
    let mean_e = noise.iter().sum::<f64>() / noise.len() as f64;
    let truth = OracleTruth {
        beta: data.coefficients_from_raw(beta),
        sigma: config.sigma,
        noise: noise.iter().map(|e| e - mean_e).collect(),
    };
    Ok(SimulatedData { data, truth, beta_raw: beta.to_vec() })
}

/// Dataset (and, when some method screens independently, a second dataset
/// with the same coefficients) for replication `rep`.
pub fn replicate_data(config: &SimConfig, rep: usize) -> Result<(SimulatedData, Option<SimulatedData>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(config.seed, rep));
    let beta = gen_coefficients(&config.pattern, config.p, config.n, &mut rng)?;
    let main = simulate_dataset(config, &beta, &mut rng)?;
    let needs_aux = config.methods.iter().any(|m| m.method != Method::Ldpe && config.resolve(m).1);
    let aux = if needs_aux { Some(simulate_dataset(config, &beta, &mut rng)?) } else { None };
    Ok((main, aux))
}

struct MethodOutcome {
    records: Vec<RepRecord>,
    failed: usize,
    max_gap: f64,
}

struct RepOutcome {
    sigma_hat: f64,
    methods: Vec<MethodOutcome>,
}

fn run_rep(config: &SimConfig, rep: usize) -> Result<RepOutcome> {
    let (main, aux) = replicate_data(config, rep)?;
    let data = &main.data;
    let needs_init = config.sigma_mode == SigmaSpec::ScaledLasso || config.methods.iter().any(|m| m.method.needs_init());
    let init: Option<ScaledLassoFit> =
        if needs_init { Some(initial_fit(data, config.lambda0, ScaledLassoOptions::default())?) } else { None };
    let sigma_hat = match config.sigma_mode {
        SigmaSpec::Fixed { value } => value,
        SigmaSpec::ScaledLasso => init.as_ref().expect("fit above").sigma_hat,
    };

    let mut screens: Vec<((ScreenMethod, bool), ScreenSet)> = Vec::new();
    for spec in &config.methods {
        if spec.method == Method::Ldpe {
            continue;
        }
        let key = config.resolve(spec);
        if screens.iter().any(|(k, _)| *k == key) {
            continue;
        }
        let source = if key.1 { &aux.as_ref().expect("independent data generated").data } else { data };
        let choice = match key.0 {
            ScreenMethod::Holp => ScreenChoice::Holp,
            _ => ScreenChoice::Sis,
        };
        screens.push((key, build_screen(source, &choice, config.d_max, 0.0)?));
    }

    let mut methods = Vec::with_capacity(config.methods.len());
    for spec in &config.methods {
        let screen = if spec.method == Method::Ldpe {
            None
        } else {
            let key = config.resolve(spec);
            screens.iter().find(|(k, _)| *k == key).map(|(_, s)| s)
        };
        let pipeline = Pipeline::new(
            data,
            spec.method,
            screen,
            sigma_hat,
            init.as_ref().map(|f| f.beta_init.as_slice()),
            config.alpha,
            config.direction,
        )?;
        let run = |j: usize| {
            pipeline.coordinate(j).map(|(dir, res)| {
                let gap = pipeline.decompose(&dir, &main.truth, res.beta_hat).identity_gap;
                (res, gap)
            })
        };
        let outcomes: Vec<_> = if config.parallel_coordinates {
            (0..config.p).into_par_iter().map(run).collect()
        } else {
            (0..config.p).map(run).collect()
        };
        let name = spec.to_string();
        let mut records = Vec::with_capacity(config.p);
        let mut failed = 0;
        let mut max_gap = 0.0f64;
        for (j, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok((res, gap)) => {
                    let f = data.raw_scale_factor(j);
                    let truth = main.truth.beta[j];
                    max_gap = max_gap.max(gap);
                    records.push(RepRecord {
                        rep,
                        method: name.clone(),
                        j,
                        beta_true: main.beta_raw[j],
                        beta_hat: res.beta_hat * f,
                        ci_lo: res.ci_lower * f,
                        ci_hi: res.ci_upper * f,
                        covered: res.ci_lower <= truth && truth <= res.ci_upper,
                        length: (res.ci_upper - res.ci_lower) * f,
                    });
                }
                Err(_) => failed += 1,
            }
        }
        methods.push(MethodOutcome { records, failed, max_gap });
    }
    Ok(RepOutcome { sigma_hat, methods })
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = it.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Runs every replication and aggregates coverage and length per method.
/// Replications are independent and seeded by index, so the report does not
/// depend on execution order or thread count.
pub fn run_replications(config: &SimConfig) -> Result<SimulationReport> {
    config.validate()?;
    let outcomes: Vec<Result<RepOutcome>> = if config.parallel_coordinates {
        (0..config.reps).map(|r| run_rep(config, r)).collect()
    } else {
        (0..config.reps).into_par_iter().map(|r| run_rep(config, r)).collect()
    };

    let mut warnings = Vec::new();
    let mut completed = Vec::new();
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => completed.push(v),
            Err(e) => warnings.push(format!("replication {rep} failed: {e}")),
        }
    }
    let failed = config.reps - completed.len();
    if failed > 0 {
        if (failed as f64) >= 0.05 * config.reps as f64 {
            return Err(HotError::FatalSimFailure { failed, total: config.reps });
        }
        warnings.push(format!("{failed} of {} replications excluded", config.reps));
    }

    let strong = config.strong_set();
    let mut is_strong = vec![false; config.p];
    for &k in &strong {
        is_strong[k] = true;
    }
    let mean_sigma = mean(completed.iter().map(|o| o.sigma_hat));
    let mut summaries = Vec::with_capacity(config.methods.len());
    let mut records = Vec::new();
    for (m, spec) in config.methods.iter().enumerate() {
        let recs: Vec<&RepRecord> = completed.iter().flat_map(|o| o.methods[m].records.iter()).collect();
        let coords_failed: usize = completed.iter().map(|o| o.methods[m].failed).sum();
        if coords_failed > 0 {
            warnings.push(format!("{spec}: {coords_failed} coordinate fits failed and were excluded"));
        }
        summaries.push(MethodSummary {
            method: spec.to_string(),
            cp_all: mean(recs.iter().map(|r| r.covered as u8 as f64)),
            cp_max: mean(recs.iter().filter(|r| is_strong[r.j]).map(|r| r.covered as u8 as f64)),
            mean_length: mean(recs.iter().map(|r| r.length)),
            mean_sigma_hat: mean_sigma,
            coordinates_failed: coords_failed,
            max_identity_gap: completed.iter().map(|o| o.methods[m].max_gap).fold(0.0, f64::max),
        });
    }
    for o in &completed {
        for mo in &o.methods {
            records.extend(mo.records.iter().cloned());
        }
    }

    Ok(SimulationReport {
        config: config.clone(),
        lambda_univ: universal_lambda(config.n, config.p),
        reps_completed: completed.len(),
        reps_failed: failed,
        methods: summaries,
        warnings,
        records,
    })
}
