use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hotinfer::data::{load_csv, ResponseSource};
use hotinfer::inference::{infer_all, InferConfig, InferenceReport, Method, ScreenChoice, SigmaMode};
use hotinfer::screening::{screen, ScreenMethod, ScreenSet};
use hotinfer::simulation::{run_replications, Pattern, SimConfig};
use hotinfer::{normal, selftest, standardize, HotError};

mod error;

use error::CliError;

/// Hybrid orthogonalization inference for high-dimensional linear models.
#[derive(Parser)]
#[command(name = "hotinfer", version)]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "HOTINFER_THREADS")]
    threads: Option<usize>,

    /// Suppress the summary on standard error.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo campaign described by a JSON config.
    Simulate(SimulateArgs),
    /// Confidence intervals for every coefficient of a CSV dataset.
    Infer(InferArgs),
    /// Rank columns and pick the screened set by BIC.
    Screen(ScreenArgs),
    /// Run the built-in correctness checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `sparse-uniform`, `approx-sparse`, or a JSON pattern object.
    #[arg(long)]
    pattern: Option<String>,
    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-coordinate records as CSV.
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// Design matrix, one row per observation.
    x: PathBuf,
    /// Single-column response file. Use `--response` to take it from the
    /// design file instead.
    y: Option<PathBuf>,
    /// Response column inside the design file, by header name or 0-based
    /// position.
    #[arg(long, conflicts_with = "y")]
    response: Option<String>,
    /// The CSV files start with a header row.
    #[arg(long)]
    header: bool,
}

impl DataArgs {
    fn source(&self) -> Result<ResponseSource, CliError> {
        match (&self.y, &self.response) {
            (Some(path), _) => Ok(ResponseSource::File(path.clone())),
            (None, Some(r)) => Ok(match r.parse::<usize>() {
                Ok(k) => ResponseSource::ColumnIndex(k),
                Err(_) => ResponseSource::ColumnName(r.clone()),
            }),
            (None, None) => Err(CliError::Usage("give a response file or --response".into())),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Hot,
    Ldpe,
    HotA,
    #[value(hide = true)]
    HotPp,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Hot => Method::Hot,
            MethodArg::Ldpe => Method::Ldpe,
            MethodArg::HotA => Method::HotA,
            MethodArg::HotPp => Method::HotPartial,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "hot")]
    method: MethodArg,
    /// `sis`, `holp`, `none` or `user:i,j,...` with 0-based columns.
    #[arg(long, default_value = "sis", value_parser = parse_screen)]
    screen: ScreenChoice,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// `scaled-lasso`, `fixed:VALUE` or a number.
    #[arg(long, default_value = "scaled-lasso", value_parser = parse_sigma)]
    sigma: SigmaMode,
    /// Screen on the first half of the rows, infer on the second.
    #[arg(long)]
    split: bool,
    #[arg(long)]
    d_max: Option<usize>,
    /// Report coefficients of the standardized columns instead of raw units.
    #[arg(long)]
    standardized: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScreenArg {
    Sis,
    Holp,
}

#[derive(Args)]
struct ScreenArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "sis")]
    method: ScreenArg,
    #[arg(long)]
    d_max: Option<usize>,
    /// Ridge added to X X^T for HOLP.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, hide = true)]
    corrupt_quantile: bool,
}

fn parse_screen(s: &str) -> Result<ScreenChoice, String> {
    match s {
        "sis" => Ok(ScreenChoice::Sis),
        "holp" => Ok(ScreenChoice::Holp),
        "none" => Ok(ScreenChoice::None),
        _ => {
            let list = s.strip_prefix("user:").ok_or_else(|| format!("unknown screen {s:?}"))?;
            list.split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad column index {t:?}")))
                .collect::<Result<Vec<_>, _>>()
                .map(ScreenChoice::User)
        }
    }
}

fn parse_sigma(s: &str) -> Result<SigmaMode, String> {
    if s == "scaled-lasso" {
        return Ok(SigmaMode::ScaledLasso);
    }
    let v = s.strip_prefix("fixed:").unwrap_or(s);
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(SigmaMode::Fixed(x)),
        _ => Err(format!("expected scaled-lasso, fixed:VALUE or a positive number, got {s:?}")),
    }
}

fn parse_pattern(s: &str, p: usize) -> Result<Pattern, CliError> {
    match s {
        "approx-sparse" => Ok(Pattern::approx_sparse_default(p)),
        "sparse-uniform" => Ok(Pattern::SparseUniform { s: 15.min(p), lo: 0.0, hi: 2.0 }),
        _ => serde_json::from_str(s)
            .map_err(|e| CliError::Usage(format!("--pattern: expected a pattern name or JSON object ({e})"))),
    }
}

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Runtime(format!("writing {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Runtime(format!("writing standard output: {e}"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("reports serialize");
    v.push(b'\n');
    v
}

fn simulate(args: &SimulateArgs, quiet: bool) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut config: SimConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Usage(format!("{}: {e} (see docs/config-schema.md)", args.config.display()))
    })?;
    if let Some(r) = args.reps {
        config.reps = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(p) = &args.pattern {
        config.pattern = parse_pattern(p, config.p)?;
    }
    let report = run_replications(&config)?;
    emit(args.out.as_deref(), &to_json(&report))?;
    if let Some(path) = &args.records {
        let mut buf = Vec::new();
        report.write_records_csv(&mut buf)?;
        write_atomic(path, &buf)?;
    }
    if !quiet {
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        eprintln!("{} replications, lambda_univ = {:.7}", report.reps_completed, report.lambda_univ);
        for m in &report.methods {
            eprintln!(
                "{:<12} cp_all {:.3}  cp_max {:.3}  length {:.3}  sigma_hat {:.3}",
                m.method, m.cp_all, m.cp_max, m.mean_length, m.mean_sigma_hat
            );
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct InferJson<'a> {
    #[serde(flatten)]
    report: &'a InferenceReport,
    screened: Option<&'a [usize]>,
    significant: Vec<usize>,
    num_significant: usize,
}

fn infer(args: &InferArgs, quiet: bool) -> Result<(), CliError> {
    let (x, y) = load_csv(&args.data.x, &args.data.source()?, args.data.header)?;
    let data = standardize(&x, &y, false)?;
    let config = InferConfig {
        method: args.method.into(),
        screen: args.screen.clone(),
        alpha: args.alpha,
        sigma: args.sigma,
        split: args.split,
        d_max: args.d_max,
        ..InferConfig::default()
    };
    let output = infer_all(&data, &config)?;
    let report = if args.standardized { output.report.clone() } else { output.report.rescaled(&output.raw_scale) };
    let significant = report.significant();
    let bytes = match args.format {
        Format::Json => to_json(&InferJson {
            report: &report,
            screened: output.screen.as_ref().map(|s| s.indices.as_slice()),
            num_significant: significant.len(),
            significant: significant.clone(),
        }),
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            buf
        }
    };
    emit(args.out.as_deref(), &bytes)?;
    if !quiet {
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        eprintln!(
            "{}: {} of {} coefficients significant at alpha = {} (sigma_hat = {:.4})",
            report.method,
            significant.len(),
            report.results.len(),
            report.alpha,
            report.sigma_hat
        );
    }
    Ok(())
}

fn screen_cmd(args: &ScreenArgs, quiet: bool) -> Result<(), CliError> {
    let (x, y) = load_csv(&args.data.x, &args.data.source()?, args.data.header)?;
    let data = standardize(&x, &y, false)?;
    let method = match args.method {
        ScreenArg::Sis => ScreenMethod::Sis,
        ScreenArg::Holp => ScreenMethod::Holp,
    };
    let set: ScreenSet = screen(&data, method, args.d_max, args.ridge)?;
    emit(args.out.as_deref(), &to_json(&set))?;
    if !quiet {
        eprintln!("selected {} columns: {:?}", set.d, set.indices);
    }
    Ok(())
}

fn run_selftest(args: &SelftestArgs) -> Result<(), CliError> {
    normal::set_quantile_corruption(args.corrupt_quantile);
    let checks = selftest::run();
    normal::set_quantile_corruption(false);
    let mut failed = Vec::new();
    for c in &checks {
        println!("{:<24} {}  ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
        if !c.passed {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("failed checks: {}", failed.join(", "))))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let quiet = cli.quiet;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => simulate(a, quiet),
        Command::Infer(a) => infer(a, quiet),
        Command::Screen(a) => screen_cmd(a, quiet),
        Command::Selftest(a) => run_selftest(a),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

impl From<HotError> for CliError {
    fn from(e: HotError) -> CliError {
        error::classify(e)
    }
}
