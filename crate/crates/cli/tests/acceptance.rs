//! Acceptance checks. Each criterion prints one line ending in PASS or FAIL;
//! the process exits nonzero if any criterion fails. Criterion 8 is long and
//! runs only with `--ignored` (or `--include-ignored`).

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hotinfer::linalg::{dot, norm2};
use hotinfer::ortho::{hybrid_direction, partial_penalized_direction, DirectionOptions, OrthoContext};
use hotinfer::screening::{screen, sis_rank, ScreenMethod, ScreenSet};
use hotinfer::simulation::{gen_design, precision_diag, run_replications, MethodSummary, Pattern, SimConfig, SimulationReport};
use hotinfer::solvers::{null_threshold, weighted_lasso, PenaltySpec, SolverOptions};
use hotinfer::{standardize, Dataset, Matrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn load_config(name: &str) -> SimConfig {
    let text = std::fs::read_to_string(workspace().join("configs").join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn methods(names: &[&str]) -> Vec<hotinfer::simulation::MethodSpec> {
    names.iter().map(|m| m.parse().unwrap()).collect()
}

fn summary<'a>(report: &'a SimulationReport, method: &str) -> &'a MethodSummary {
    report.methods.iter().find(|m| m.method == method).unwrap()
}

fn gaussian(n: usize, q: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_col_major(n, q, (0..n * q).map(|_| rng.sample(StandardNormal)).collect())
}

fn ar1_instance(seed: u64) -> Dataset {
    let (n, p) = (60, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gen_design(n, p, 0.5, &mut rng);
    let mut beta = vec![0.0; p];
    beta[0] = 2.0;
    beta[3] = -1.0;
    beta[7] = 1.5;
    let mut y = x.mul_vec(&beta);
    for v in y.iter_mut() {
        *v += rng.sample::<f64, _>(StandardNormal);
    }
    standardize(&x, &y, false).unwrap()
}

fn top_five(data: &Dataset) -> ScreenSet {
    ScreenSet::user(&sis_rank(data)[..5], data.p(), data.n()).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let opts = DirectionOptions::default();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let data = ar1_instance(1000 + seed);
        let set = top_five(&data);
        let ctx = OrthoContext::new(&data, &set).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let j = rng.random_range(0..data.p());
            let hot = hybrid_direction(&ctx, j, &opts).unwrap();
            let pp = partial_penalized_direction(&ctx, j, &opts).unwrap();
            let scale = hot.z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let gap = hot.z.iter().zip(&pp.z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(gap / scale);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-6 && elapsed < Duration::from_secs(30),
        format!("max relative gap {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    )
}

/// Exhaustive search over sign patterns of the penalized coordinates.
fn sign_pattern_oracle(x: &Matrix, t: &[f64], pen: &PenaltySpec) -> Option<Vec<f64>> {
    let n = x.nrows() as f64;
    let q = x.ncols();
    let xa = DMatrix::from_column_slice(x.nrows(), q, x.as_col_major());
    let tv = DVector::from_column_slice(t);
    let penalized = pen.penalized();
    let mut found = Vec::new();
    for code in 0..3usize.pow(penalized.len() as u32) {
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
            let mut rhs = sub.transpose() * &tv;
            for (pos, &k) in active.iter().enumerate() {
                rhs[pos] -= n * pen.lambda * pen.weights[k] * signs[k] as f64;
            }
            let Some(sol) = (sub.transpose() * &sub).lu().solve(&rhs) else { continue };
            for (pos, &k) in active.iter().enumerate() {
                b[k] = sol[pos];
            }
        }
        if !(0..q).all(|k| pen.is_free(k) || signs[k] == 0 || b[k] * signs[k] as f64 > 0.0) {
            continue;
        }
        let grad = xa.transpose() * (&tv - &xa * DVector::from_column_slice(&b)) / n;
        if (0..q).all(|k| pen.is_free(k) || signs[k] != 0 || grad[k].abs() <= pen.lambda * pen.weights[k] + 1e-12) {
            found.push(b);
        }
    }
    (found.len() == 1).then(|| found.pop().unwrap())
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let solver = SolverOptions { tol: 1e-12, max_iter: 200_000 };
    let mut worst = 0.0f64;
    let mut ambiguous = 0;
    for case in 0..100 {
        let q = 2 + case % 5;
        let n = 20 + case % 7;
        let x = gaussian(n, q, &mut rng);
        let truth: Vec<f64> = (0..q).map(|_| if rng.random::<f64>() < 0.5 { rng.random_range(-2.0..2.0) } else { 0.0 }).collect();
        let mut t = x.mul_vec(&truth);
        for v in t.iter_mut() {
            *v += rng.sample::<f64, _>(StandardNormal);
        }
        let weights = (0..q).map(|_| rng.random_range(0.5..1.5)).collect();
        let free_set = if case % 2 == 0 { vec![rng.random_range(0..q)] } else { Vec::new() };
        let template = PenaltySpec { lambda: 0.0, weights, free_set };
        let pen = template.with_lambda(null_threshold(&x, &t, &template) * rng.random_range(0.05..0.9));
        let fit = weighted_lasso(&x, &t, &pen, None, solver).unwrap();
        match sign_pattern_oracle(&x, &t, &pen) {
            Some(b) => {
                let gap = b.iter().zip(&fit.coefficients).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
                worst = worst.max(gap);
            }
            None => ambiguous += 1,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-8 && ambiguous == 0 && elapsed < Duration::from_secs(30),
        format!("max coefficient gap {worst:.2e}, {ambiguous} ambiguous oracles, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn criterion_3() -> Outcome {
    let opts = DirectionOptions::default();
    let slack = opts.solver.tol;
    let (mut ortho, mut dominance, mut kkt) = (0.0f64, 0.0f64, 0.0f64);
    let mut count = 0;
    for seed in 0..10 {
        let data = ar1_instance(3000 + seed);
        let n = data.n() as f64;
        let set = top_five(&data);
        let ctx = OrthoContext::new(&data, &set).unwrap();
        for j in 0..data.p() {
            let dir = hybrid_direction(&ctx, j, &opts).unwrap();
            let f = ctx.features(j).unwrap();
            let zn = norm2(&dir.z);
            for &s in &dir.projection_set {
                let x = data.x().col(s);
                ortho = ortho.max(dot(&dir.z, x).abs() / (zn * norm2(x)));
            }
            dominance = dominance.max(1.0 - dir.z_dot_xj / (zn * zn));
            for &k in &f.relaxed_set {
                let bound = n.sqrt() * dir.lambda_j * norm2(f.psi_of(k).unwrap());
                kkt = kkt.max(dot(&dir.z, data.x().col(k)).abs() - bound);
            }
            count += 1;
        }
    }
    // the solver certificate is on the 1/n scale
    let passed = ortho <= 1e-8 && dominance <= 1e-8 && kkt <= 60.0 * slack;
    outcome(
        passed,
        format!("{count} directions: orthogonality {ortho:.1e}, 1 - z'x_j/|z|^2 {dominance:.1e}, KKT excess {kkt:.1e}"),
    )
}

fn criterion_4() -> Outcome {
    let mut config = load_config("example1.json");
    config.reps = 6;
    config.p = 200;
    config.methods = methods(&["HOT-SIS", "HOT-SIS(I)", "HOT-HOLP", "HOT-HOLP(I)", "HOT-A", "HOT-PP", "LDPE"]);
    let report = run_replications(&config).unwrap();
    let worst = report.methods.iter().map(|m| m.max_identity_gap).fold(0.0f64, f64::max);
    outcome(
        worst <= 1e-10 && report.reps_completed == config.reps,
        format!("{} reps x {} methods, largest gap {worst:.2e}", report.reps_completed, report.methods.len()),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (n, p, rho) = (400, 100, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = gen_design(n, p, rho, &mut rng);
    let mut beta = vec![0.0; p];
    beta[0] = 1.0;
    beta[1] = -1.0;
    beta[2] = 0.5;
    let mut y = x.mul_vec(&beta);
    for v in y.iter_mut() {
        *v += rng.sample::<f64, _>(StandardNormal);
    }
    let data = standardize(&x, &y, false).unwrap();
    let set = screen(&data, ScreenMethod::Sis, None, 0.0).unwrap();
    let ctx = OrthoContext::new(&data, &set).unwrap();
    let opts = DirectionOptions::default();
    let interior = 1..p - 1;
    let count = interior.len() as f64;
    let mean = interior.map(|j| hybrid_direction(&ctx, j, &opts).unwrap().tau * (n as f64).sqrt()).sum::<f64>() / count;
    let phi = precision_diag(rho, p)[p / 2];
    let target = 0.7746;
    let elapsed = start.elapsed();
    outcome(
        (mean - target).abs() <= 0.1 * target && elapsed < Duration::from_secs(300),
        format!(
            "mean tau*sqrt(n) {mean:.4} vs target {target} (phi_jj {phi:.4}, phi_jj^(1/2) {:.4}), {:.1}s",
            phi.sqrt(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut config = load_config("example1.json");
    config.reps = 50;
    config.methods = methods(&["HOT-SIS", "LDPE"]);
    let report = run_replications(&config).unwrap();
    let hot = summary(&report, "HOT-SIS");
    let ldpe = summary(&report, "LDPE");
    let elapsed = start.elapsed();
    let passed = (0.91..=0.97).contains(&hot.cp_all)
        && (0.90..=0.98).contains(&hot.cp_max)
        && (0.60..=0.75).contains(&hot.mean_length)
        && ldpe.cp_max <= 0.80
        && (0.90..=1.00).contains(&hot.mean_sigma_hat)
        && elapsed < Duration::from_secs(1800);
    outcome(
        passed,
        format!(
            "HOT-SIS cp_all {:.3} cp_max {:.3} length {:.3} sigma_hat {:.3}; LDPE cp_max {:.3}; {:.0}s",
            hot.cp_all,
            hot.cp_max,
            hot.mean_length,
            hot.mean_sigma_hat,
            ldpe.cp_max,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    for s in [5usize, 20, 40] {
        let mut config = load_config("figure2.json");
        config.reps = 30;
        config.pattern = Pattern::SparseUniform { s, lo: 0.0, hi: 2.0 };
        config.methods = methods(&["HOT-SIS", "LDPE"]);
        let report = run_replications(&config).unwrap();
        rows.push((s, summary(&report, "HOT-SIS").cp_max, summary(&report, "LDPE").cp_max));
    }
    let elapsed = start.elapsed();
    let (ldpe5, (hot40, ldpe40)) = (rows[0].2, (rows[2].1, rows[2].2));
    let passed = rows.iter().all(|r| r.1 >= 0.90)
        && ldpe5 - ldpe40 >= 0.05
        && hot40 - ldpe40 >= 0.05
        && elapsed < Duration::from_secs(1200);
    let table: Vec<String> = rows.iter().map(|(s, h, l)| format!("s={s}: HOT {h:.3} LDPE {l:.3}")).collect();
    outcome(passed, format!("cp_max {}; {:.0}s", table.join(", "), elapsed.as_secs_f64()))
}

fn criterion_8() -> Outcome {
    let mut config = load_config("example2.json");
    config.reps = 30;
    let report = run_replications(&config).unwrap();
    let hot = summary(&report, "HOT-SIS");
    let ldpe = summary(&report, "LDPE");
    let passed = (0.92..=0.98).contains(&hot.cp_all)
        && ldpe.cp_all <= hot.cp_all
        && (0.28..=0.33).contains(&hot.mean_length)
        && (0.28..=0.33).contains(&ldpe.mean_length);
    outcome(
        passed,
        format!(
            "HOT cp_all {:.3} length {:.3}; LDPE cp_all {:.3} length {:.3}",
            hot.cp_all, hot.mean_length, ldpe.cp_all, ldpe.mean_length
        ),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(
        &config,
        r#"{ "n": 80, "p": 120, "rho": 0.5, "sigma": 1.0,
             "pattern": { "kind": "sparse-uniform", "s": 5, "lo": 0.0, "hi": 2.0 },
             "reps": 4, "seed": 99, "methods": ["HOT-SIS", "HOT-HOLP(I)", "LDPE"] }"#,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = gen_design(60, 90, 0.5, &mut rng);
    let xs: String = (0..60).map(|i| (0..90).map(|k| x.get(i, k).to_string()).collect::<Vec<_>>().join(",") + "\n").collect();
    let ys: String = (0..60).map(|i| format!("{}\n", 2.0 * x.get(i, 0) - x.get(i, 4) + rng.sample::<f64, _>(StandardNormal))).collect();
    let (xp, yp) = (dir.path().join("x.csv"), dir.path().join("y.csv"));
    std::fs::write(&xp, xs).unwrap();
    std::fs::write(&yp, ys).unwrap();

    let run = |threads: &str, args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_hotinfer")).args(["--threads", threads, "-q"]).args(args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let sim = ["simulate", "--config", config.to_str().unwrap()];
    let inf = ["infer", xp.to_str().unwrap(), yp.to_str().unwrap(), "--method", "hot"];
    let same_sim = run("1", &sim) == run("8", &sim);
    let same_inf = run("1", &inf) == run("8", &inf);
    outcome(same_sim && same_inf, format!("simulate identical: {same_sim}, infer identical: {same_inf}"))
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let with_ignored = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let criteria: [(u32, &str, fn() -> Outcome, bool); 9] = [
        (1, "two-step and partially penalized directions agree", criterion_1, false),
        (2, "lasso matches the sign-pattern oracle", criterion_2, false),
        (3, "orthogonality and KKT certificates", criterion_3, false),
        (4, "decomposition identity on simulated data", criterion_4, false),
        (5, "tau*sqrt(n) limit", criterion_5, false),
        (6, "Example 1 at 50 replications", criterion_6, false),
        (7, "coverage trend over sparsity", criterion_7, false),
        (8, "Example 2 at 30 replications", criterion_8, true),
        (9, "thread count leaves reports unchanged", criterion_9, false),
    ];
    let mut failed = 0;
    for (id, name, check, long) in criteria {
        let label = format!("criterion {id}");
        if !filters.is_empty() && !filters.iter().any(|f| label.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        if long && !with_ignored {
            println!("{label}: {name} ... IGNORED (run with --ignored)");
            continue;
        }
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| outcome(false, "panicked"));
        let verdict = if result.passed { "PASS" } else { "FAIL" };
        println!("{label}: {name} ... {verdict} ({})", result.detail);
        failed += usize::from(!result.passed);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
