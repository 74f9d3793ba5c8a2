//! `fjsim`: run exact steady-state experiments on fork-join networks from JSON configs.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fjsim_core::config::parse_quantity;
use fjsim_core::{
    coverage_experiment, mm_forkjoin_mean_sojourn, mm_forkjoin_mean_unsync, mm_forkjoin_sojourn_derivative,
    run_experiment, BackwardSampler, CramerRoots, DistributionSpec, Error, EstimateReport, ExperimentConfig,
    NetworkModel, Quantity, SamplerConfig,
};
use serde::Serialize;

const OUTPUT_HELP: &str = "\
Output files (--out) are written as JSON or CSV according to the extension and never
contain timings, so identical invocations give byte-identical files.

CSV columns:
  estimate, gradient   quantity,mean,sd,n,half_width
  coverage             quantity,truth,n_cis,reps_per_ci,covered
  repro table1         mu,one_minus_rho,true_s,est_s,hw_s,true_d,est_d,hw_d
  repro table2         mu,one_minus_rho,true_grad,est_grad,hw_grad
  repro table3         quantity,k,mu,mean,half_width
  repro table4         k,mu,mean,half_width

Quantity names: S (sojourn time), D_total, Q_k (tasks at station k), D_k (finished
tasks of station k waiting for siblings), H_k (derivative of E[S] in mu_k), H_sum.

Exit codes: 0 success, 2 usage or config error, 3 invalid model or settings,
4 step budget exhausted.";

#[derive(Parser, Debug)]
#[command(name = "fjsim", version, about = "Exact steady-state simulation of fork-join queueing networks", after_help = OUTPUT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a config: stability, light tails and tilting roots.
    Validate { config: PathBuf },
    /// Estimate every selected steady-state quantity.
    Estimate {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Estimate the sojourn-time gradient in the service rates.
    Gradient {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Count how many independent 95% intervals cover a known value.
    Coverage {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        n_cis: Option<usize>,
        #[arg(long)]
        reps_per_ci: Option<usize>,
        /// Value to cover; defaults to the closed form for two identical Markovian stations.
        #[arg(long, allow_negative_numbers = true)]
        truth: Option<f64>,
        /// Quantity name (S, D_total, H_sum, ...).
        #[arg(long)]
        quantity: Option<String>,
    },
    /// Rerun one of the built-in reference experiments.
    Repro {
        table: Table,
        #[command(flatten)]
        run: RunArgs,
        /// For table3/table4: use rates 2.05 - 0.05k (2.00 down to 1.55) instead of 2 - 0.05k.
        #[arg(long)]
        tabulated_rates: bool,
    },
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, env = "FJSIM_SEED")]
    seed: Option<u64>,
    /// Result file, `.json` or `.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Ceiling on random-walk increments per draw.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    milestone_c: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Table {
    Table1,
    Table2,
    Table3,
    Table4,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Model(Error),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(e) if matches!(e.root_cause(), Error::BudgetExceeded { .. }) => 4,
            CliError::Model(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => f.write_str(msg),
            CliError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Model(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_REPRO_REPS: usize = 10_000;

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "fjsim: {e}");
            e.code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Validate { config } => validate(&config, out),
        Command::Estimate { config, run } => estimate(&config, &run, false, out),
        Command::Gradient { config, run } => estimate(&config, &run, true, out),
        Command::Coverage { config, run, n_cis, reps_per_ci, truth, quantity } => {
            coverage(&config, &run, n_cis, reps_per_ci, truth, quantity, out)
        }
        Command::Repro { table, run, tabulated_rates } => repro(table, &run, tabulated_rates, out),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Config(format!("I/O error: {e}"))
}

fn load(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Applies command-line overrides and validates.
fn settle(mut cfg: ExperimentConfig, run: &RunArgs) -> CliResult<(ExperimentConfig, u64)> {
    if let Some(r) = run.reps {
        cfg.reps = r;
    }
    if let Some(b) = run.budget {
        cfg.budget = b;
    }
    if let Some(c) = run.milestone_c {
        cfg.milestone_c = c;
    }
    let seed = run.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    cfg.validate()?;
    Ok((cfg, seed))
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(job()),
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

enum Format {
    Json,
    Csv,
}

fn format_of(path: &Path) -> CliResult<Format> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("json") => Ok(Format::Json),
        Some("csv") => Ok(Format::Csv),
        _ => Err(CliError::Config(format!("{}: output must end in .json or .csv", path.display()))),
    }
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io_err)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err)
}

/// Writes `json` or `rows` depending on the file extension.
fn emit<J: Serialize + ?Sized, R: Serialize>(path: Option<&Path>, json: &J, rows: &[R]) -> CliResult<()> {
    let Some(path) = path else { return Ok(()) };
    match format_of(path)? {
        Format::Json => write_json(path, json),
        Format::Csv => write_csv(path, rows),
    }
}

fn validate(path: &Path, out: &mut dyn Write) -> CliResult<()> {
    let cfg = load(path)?;
    cfg.validate()?;
    let model = cfg.model();
    let roots = CramerRoots::solve(&model)?;
    let mut text = format!("ok: {} stations, {} replications\n", model.k(), cfg.reps);
    for (k, (load, theta)) in model.loads().iter().zip(&roots.theta).enumerate() {
        let _ = writeln!(text, "  station {}: rate {} load {load:.4} theta {theta:.6}", k + 1, model.stations[k].rate);
    }
    out.write_all(text.as_bytes()).map_err(io_err)
}

#[derive(Serialize)]
struct EstimateRow<'a> {
    quantity: &'a str,
    mean: f64,
    sd: f64,
    n: usize,
    half_width: f64,
}

#[derive(Serialize)]
struct EstimateFile<'a> {
    #[serde(flatten)]
    report: &'a EstimateReport,
    stationarity: Vec<(&'static str, &'static str)>,
}

fn report_table(report: &EstimateReport, keep: &[Quantity]) -> String {
    let mut s = format!("{:<10} {:>14} {:>12} {:>12}\n", "quantity", "mean", "+/- 95%", "sd");
    for q in keep {
        let e = report.get(*q);
        let _ = writeln!(s, "{:<10} {:>14.6} {:>12.6} {:>12.6}", e.name, e.mean, e.half_width, e.sd);
    }
    s
}

fn estimate(path: &Path, run: &RunArgs, gradient_only: bool, out: &mut dyn Write) -> CliResult<()> {
    let (cfg, seed) = settle(load(path)?, run)?;
    let sampler = BackwardSampler::from_model(&cfg.model(), cfg.sampler_config())?;
    let keep: Vec<Quantity> = if gradient_only {
        Quantity::all(cfg.stations.len()).into_iter().filter(|q| matches!(q, Quantity::Gradient(_) | Quantity::GradientSum)).collect()
    } else {
        cfg.selected()
    };
    let report = with_threads(run.threads, || run_experiment(&sampler, cfg.reps, seed))??;
    let mut text = report_table(&report, &keep);
    let _ = writeln!(
        text,
        "reps {}  seed {}  ties {}  tau extensions {}  mean horizon {:.2}  seconds {:.3}",
        report.n_reps,
        report.seed,
        report.ties,
        report.tau_extensions,
        report.mean_horizon,
        report.wall_seconds.unwrap_or(0.0)
    );
    out.write_all(text.as_bytes()).map_err(io_err)?;

    let mut stable = report.without_timing();
    stable.quantities.retain(|e| keep.iter().any(|q| q.name() == e.name));
    let rows: Vec<EstimateRow> = stable
        .quantities
        .iter()
        .map(|e| EstimateRow { quantity: &e.name, mean: e.mean, sd: e.sd, n: e.n, half_width: e.half_width })
        .collect();
    let file = EstimateFile { report: &stable, stationarity: fjsim_core::observables::STATIONARITY.to_vec() };
    emit(run.out.as_deref(), &file, &rows)
}

/// Closed-form value for two identical Markovian stations fed by Poisson arrivals.
fn closed_form_truth(model: &NetworkModel, q: Quantity) -> Option<f64> {
    let DistributionSpec::Exponential { rate: lambda } = model.arrival else { return None };
    let speeds: Vec<(f64, f64)> = model
        .stations
        .iter()
        .map(|s| match s.service {
            DistributionSpec::Exponential { rate } => Some((rate, s.rate)),
            _ => None,
        })
        .collect::<Option<_>>()?;
    if speeds.len() != 2 || speeds[0] != speeds[1] {
        return None;
    }
    let (r, mu) = speeds[0];
    let nu = r * mu;
    match q {
        Quantity::Sojourn => mm_forkjoin_mean_sojourn(lambda, nu).ok(),
        Quantity::TotalUnsync => mm_forkjoin_mean_unsync(lambda, nu).ok(),
        // service times are exp(r mu): d/dmu = r d/dnu
        Quantity::GradientSum => mm_forkjoin_sojourn_derivative(lambda, nu).ok().map(|d| r * d),
        _ => None,
    }
}

#[derive(Serialize)]
struct CoverageRow<'a> {
    quantity: &'a str,
    truth: f64,
    n_cis: usize,
    reps_per_ci: usize,
    covered: usize,
}

fn coverage(
    path: &Path,
    run: &RunArgs,
    n_cis: Option<usize>,
    reps_per_ci: Option<usize>,
    truth: Option<f64>,
    quantity: Option<String>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let (cfg, seed) = settle(load(path)?, run)?;
    let block = cfg.coverage.clone();
    let n_cis = n_cis.or(block.as_ref().map(|b| b.n_cis)).unwrap_or(200);
    let reps_per_ci = reps_per_ci.or(block.as_ref().map(|b| b.reps_per_ci)).unwrap_or(cfg.reps);
    if n_cis == 0 {
        return Err(CliError::Config("--n-cis must be positive".into()));
    }
    let name = quantity.or(block.as_ref().and_then(|b| b.quantity.clone())).unwrap_or_else(|| "S".into());
    let q = parse_quantity(&name, cfg.stations.len()).map_err(|e| CliError::Config(e.to_string()))?;
    let model = cfg.model();
    let truth = truth
        .or(block.as_ref().and_then(|b| b.truth))
        .or_else(|| closed_form_truth(&model, q))
        .ok_or_else(|| CliError::Config(format!("no closed form for {name} in this model; pass --truth")))?;
    let sampler = BackwardSampler::from_model(&model, cfg.sampler_config())?;
    let start = Instant::now();
    let res = with_threads(run.threads, || coverage_experiment(&sampler, q, n_cis, reps_per_ci, truth, seed))??;
    let text = format!(
        "{name}: {}/{} intervals of {} draws cover {truth} ({:.1}%)  seed {seed}  seconds {:.3}\n",
        res.covered,
        res.n_cis,
        res.reps_per_ci,
        100.0 * res.fraction(),
        start.elapsed().as_secs_f64()
    );
    out.write_all(text.as_bytes()).map_err(io_err)?;
    let row = CoverageRow { quantity: &name, truth, n_cis, reps_per_ci, covered: res.covered };
    emit(run.out.as_deref(), &row, &[&row])
}

#[derive(Serialize)]
struct Table1Row {
    mu: f64,
    one_minus_rho: f64,
    true_s: f64,
    est_s: f64,
    hw_s: f64,
    true_d: f64,
    est_d: f64,
    hw_d: f64,
}

#[derive(Serialize)]
struct Table2Row {
    mu: f64,
    one_minus_rho: f64,
    true_grad: f64,
    est_grad: f64,
    hw_grad: f64,
}

#[derive(Serialize)]
struct Table3Row {
    quantity: String,
    k: Option<usize>,
    mu: Option<f64>,
    mean: f64,
    half_width: f64,
}

#[derive(Serialize)]
struct Table4Row {
    k: usize,
    mu: f64,
    mean: f64,
    half_width: f64,
}

const TWO_STATION_RATES: [f64; 4] = [1.8, 1.4, 1.1, 1.06];

fn ten_station_rates(tabulated: bool) -> Vec<f64> {
    let top = if tabulated { 2.05 } else { 2.0 };
    (1..=10).map(|k| top - 0.05 * k as f64).collect()
}

fn sampler_for(model: &NetworkModel, run: &RunArgs) -> CliResult<BackwardSampler> {
    let defaults = SamplerConfig::default();
    let config = SamplerConfig {
        milestone_c: run.milestone_c.unwrap_or(defaults.milestone_c),
        step_budget: run.budget.unwrap_or(defaults.step_budget),
    };
    Ok(BackwardSampler::from_model(model, config)?)
}

fn repro(table: Table, run: &RunArgs, tabulated: bool, out: &mut dyn Write) -> CliResult<()> {
    let reps = run.reps.unwrap_or(DEFAULT_REPRO_REPS);
    let seed = run.seed.unwrap_or(DEFAULT_SEED);
    if reps < 2 {
        return Err(Error::InsufficientSamples { n: reps }.into());
    }
    let timed = |model: &NetworkModel| -> CliResult<(EstimateReport, f64)> {
        let sampler = sampler_for(model, run)?;
        let start = Instant::now();
        let report = with_threads(run.threads, || run_experiment(&sampler, reps, seed))??;
        Ok((report, start.elapsed().as_secs_f64()))
    };
    let mut text = String::new();
    match table {
        Table::Table1 | Table::Table2 => {
            let mut rows1 = Vec::new();
            let mut rows2 = Vec::new();
            if table == Table::Table1 {
                let _ = writeln!(text, "{:>6} {:>8} {:>9} {:>20} {:>9} {:>20} {:>8}", "mu", "1-rho", "true S", "est S", "true D", "est D", "seconds");
            } else {
                let _ = writeln!(text, "{:>6} {:>8} {:>11} {:>24} {:>8}", "mu", "1-rho", "true dS/dmu", "est dS/dmu", "seconds");
            }
            for mu in TWO_STATION_RATES {
                let (report, secs) = timed(&NetworkModel::markovian(1.0, &[mu, mu]))?;
                let one_minus_rho = 1.0 - 1.0 / mu;
                if table == Table::Table1 {
                    let (s, d) = (report.get(Quantity::Sojourn), report.get(Quantity::TotalUnsync));
                    let row = Table1Row {
                        mu,
                        one_minus_rho,
                        true_s: mm_forkjoin_mean_sojourn(1.0, mu)?,
                        est_s: s.mean,
                        hw_s: s.half_width,
                        true_d: mm_forkjoin_mean_unsync(1.0, mu)?,
                        est_d: d.mean,
                        hw_d: d.half_width,
                    };
                    let _ = writeln!(
                        text,
                        "{:>6.4} {:>8.4} {:>9.4} {:>11.4} +/- {:<5.4} {:>9.4} {:>11.4} +/- {:<5.4} {:>8.3}",
                        row.mu, row.one_minus_rho, row.true_s, row.est_s, row.hw_s, row.true_d, row.est_d, row.hw_d, secs
                    );
                    rows1.push(row);
                } else {
                    let h = report.get(Quantity::GradientSum);
                    let row = Table2Row {
                        mu,
                        one_minus_rho,
                        true_grad: mm_forkjoin_sojourn_derivative(1.0, mu)?,
                        est_grad: h.mean,
                        hw_grad: h.half_width,
                    };
                    let _ = writeln!(
                        text,
                        "{:>6.4} {:>8.4} {:>11.4} {:>13.4} +/- {:<7.4} {:>8.3}",
                        row.mu, row.one_minus_rho, row.true_grad, row.est_grad, row.hw_grad, secs
                    );
                    rows2.push(row);
                }
            }
            out.write_all(text.as_bytes()).map_err(io_err)?;
            if table == Table::Table1 {
                emit(run.out.as_deref(), &rows1, &rows1)
            } else {
                emit(run.out.as_deref(), &rows2, &rows2)
            }
        }
        Table::Table3 | Table::Table4 => {
            let rates = ten_station_rates(tabulated);
            let (report, secs) = timed(&NetworkModel::markovian(1.0, &rates))?;
            if table == Table::Table3 {
                let s = report.get(Quantity::Sojourn);
                let mut rows = vec![Table3Row { quantity: "S".into(), k: None, mu: None, mean: s.mean, half_width: s.half_width }];
                let _ = writeln!(text, "E[S] = {:.4} +/- {:.4}", s.mean, s.half_width);
                let _ = writeln!(text, "{:>3} {:>7} {:>22}", "k", "mu_k", "E[D_k]");
                for (k, &mu) in rates.iter().enumerate() {
                    let d = report.get(Quantity::Unsync(k));
                    let _ = writeln!(text, "{:>3} {:>7.4} {:>11.4} +/- {:<6.4}", k + 1, mu, d.mean, d.half_width);
                    rows.push(Table3Row { quantity: d.name.clone(), k: Some(k + 1), mu: Some(mu), mean: d.mean, half_width: d.half_width });
                }
                let _ = writeln!(text, "seconds {secs:.3}");
                out.write_all(text.as_bytes()).map_err(io_err)?;
                emit(run.out.as_deref(), &rows, &rows)
            } else {
                let _ = writeln!(text, "{:>3} {:>7} {:>24}", "k", "mu_k", "dE[S]/dmu_k");
                let mut rows = Vec::new();
                for (k, &mu) in rates.iter().enumerate() {
                    let h = report.get(Quantity::Gradient(k));
                    let _ = writeln!(text, "{:>3} {:>7.4} {:>11.4} +/- {:<6.4}", k + 1, mu, h.mean, h.half_width);
                    rows.push(Table4Row { k: k + 1, mu, mean: h.mean, half_width: h.half_width });
                }
                let _ = writeln!(text, "seconds {secs:.3}");
                out.write_all(text.as_bytes()).map_err(io_err)?;
                emit(run.out.as_deref(), &rows, &rows)
            }
        }
    }
}
