//! Quick correctness checks on one seeded instance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::data::standardize;
use crate::linalg::{dot, norm2, norm_inf};
use crate::normal;
use crate::ortho::{hybrid_direction, partial_penalized_direction, DirectionOptions, OrthoContext};
use crate::screening::ScreenSet;
use crate::simulation::gen_design;
use crate::solvers::{weighted_lasso, PenaltySpec, SolverOptions};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Check {
        Check { name, passed, detail }
    }
}

const SEED: u64 = 0x5e1f_7e57;
const SCREENED: [usize; 5] = [0, 3, 7, 12, 20];
const COORDS: [usize; 4] = [0, 5, 20, 33];

/// Runs every check in a fixed order. Output is identical between runs.
pub fn run() -> Vec<Check> {
    let mut out = vec![quantile_check()];

    let (n, p) = (60, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let x = gen_design(n, p, 0.5, &mut rng);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut rng);
            2.0 * x.get(i, 0) - x.get(i, 3) + 1.5 * x.get(i, 7) + e
        })
        .collect();
    let data = match standardize(&x, &y, false) {
        Ok(d) => d,
        Err(e) => {
            out.push(Check::new("instance", false, e.to_string()));
            return out;
        }
    };

    let pen = PenaltySpec::uniform(0.1, p);
    out.push(match weighted_lasso(data.x(), data.y(), &pen, None, SolverOptions::default()) {
        Ok(fit) => Check::new(
            "lasso-kkt",
            fit.kkt_violation <= 1e-6,
            format!("violation {:.3e}", fit.kkt_violation),
        ),
        Err(e) => Check::new("lasso-kkt", false, e.to_string()),
    });

    let screen = ScreenSet::user(&SCREENED, p, n).expect("fixed screen set is valid");
    let ctx = match OrthoContext::new(&data, &screen) {
        Ok(c) => c,
        Err(e) => {
            out.push(Check::new("orthogonality", false, e.to_string()));
            return out;
        }
    };
    let opts = DirectionOptions::default();
    let root_n = (n as f64).sqrt();

    let mut ortho_worst = 0.0f64;
    let mut kkt_worst = f64::NEG_INFINITY;
    let mut gap_worst = 0.0f64;
    let mut failure = None;
    for &j in &COORDS {
        let (hot, pp) = match (hybrid_direction(&ctx, j, &opts), partial_penalized_direction(&ctx, j, &opts)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                failure = Some(format!("j = {j}: {e}"));
                break;
            }
        };
        let zn = norm2(&hot.z);
        for &s in &hot.projection_set {
            let rel = dot(&hot.z, data.x().col(s)).abs() / (zn * norm2(data.x().col(s)));
            ortho_worst = ortho_worst.max(rel);
        }
        let f = ctx.features(j).expect("features exist when the direction does");
        for k in (0..p).filter(|&k| k != j && !hot.projection_set.contains(&k)) {
            let bound = root_n * hot.lambda_j * f.psi_of(k).map(norm2).unwrap_or(0.0);
            let excess = dot(&hot.z, data.x().col(k)).abs() - bound;
            kkt_worst = kkt_worst.max(excess / (n as f64));
        }
        let diff = hot.z.iter().zip(&pp.z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        gap_worst = gap_worst.max(diff / norm_inf(&hot.z));
    }
    if let Some(msg) = failure {
        out.push(Check::new("orthogonality", false, msg));
        return out;
    }
    out.push(Check::new("orthogonality", ortho_worst <= 1e-8, format!("max cosine {ortho_worst:.3e}")));
    out.push(Check::new("direction-kkt", kkt_worst <= 1e-6, format!("max excess {kkt_worst:.3e}")));
    out.push(Check::new("two-route-equivalence", gap_worst <= 1e-6, format!("max relative gap {gap_worst:.3e}")));
    out
}

fn quantile_check() -> Check {
    let cases = [(0.975, 1.959_963_984_540_054), (0.995, 2.575_829_303_548_901), (0.05, -1.644_853_626_951_472_2)];
    let worst = cases.iter().map(|&(p, q)| (normal::quantile(p) - q).abs()).fold(0.0, f64::max);
    Check::new("normal-quantile", worst <= 1e-12, format!("max error {worst:.3e}"))
}
