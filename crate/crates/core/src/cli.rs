//! Command-line front-end.
//!
//! Every command prints a table preceded by its metadata: `# key=value`
//! comment lines in CSV, a `meta` object in JSON. Output depends only on the
//! flags, so reruns are byte-identical.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::asymptotic::{asymptotic_price, asymptotic_range, asymptotic_volume};
use crate::error::AuctionError;
use crate::exact::{
    default_k_max, uniform_grid, volume_pmf, volume_pmf_hyp, PriceBoundSeries, RangeMixture,
    DEFAULT_GRID_POINTS, DEFAULT_TOL,
};
use crate::model::AuctionParams;
use crate::montecarlo::fit_exponential_mle;
use crate::price_dist::{parse_dist, PriceDistribution};
use crate::validate::{run_validation, ValidationConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

/// Probability cut used to bound the default grid of an unbounded price law.
const GRID_TAIL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("validation failed")]
    ValidationFailed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Auction(AuctionError::ToleranceNotMet { .. } | AuctionError::QuadratureFailure { .. }) => {
                EXIT_TOLERANCE
            }
            CliError::ValidationFailed => EXIT_VALIDATION,
            _ => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "call-auction", version, about = "Exact, asymptotic and simulated laws of call-auction clearing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Traded volume law. Columns: k, exact_pmf, exact_pmf_hyp,
    /// asymptotic_density, tail_bound (bound on P(V > k)).
    Volume(VolumeArgs),
    /// Densities of the lowest and highest clearing prices. Columns: x, f_L,
    /// f_U, f_L_error_bound, f_U_error_bound, asymptotic_density.
    Prices(PricesArgs),
    /// Density of the clearing range. Columns: delta, f_R, f_R_error_bound,
    /// asymptotic_density, scaled_delta (rate * delta), scaled_density (f_R / rate).
    Range(RangeArgs),
    /// Runs the self-check suite and prints a JSON report.
    Validate(ValidateArgs),
    /// Exponential maximum-likelihood fit of spread samples. Columns: x,
    /// empirical_log_survival, fitted_log_survival.
    FitSpread(FitArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Total order arrival rate.
    #[arg(long = "lambda", default_value_t = 10.0)]
    pub lambda: f64,
    /// Share of ask orders in the flow.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Auction length.
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub theta_ask: f64,
    #[arg(long, default_value_t = 0.0)]
    pub theta_bid: f64,
    /// Absolute error tolerance of series and quadratures.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<AuctionParams, CliError> {
        Ok(AuctionParams::with_cancellation(
            self.lambda,
            self.alpha,
            self.horizon,
            self.theta_ask,
            self.theta_bid,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(format!("grid '{s}' must look like lo:hi:n"));
    };
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad grid start '{lo}'"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad grid end '{hi}'"))?;
    let points: usize = n.trim().parse().map_err(|_| format!("bad grid size '{n}'"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("grid needs finite lo < hi, got {lo}:{hi}"));
    }
    if points < 2 {
        return Err(format!("grid needs at least 2 points, got {points}"));
    }
    Ok(Grid { lo, hi, points })
}

#[derive(Debug, Clone, Args)]
pub struct VolumeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Largest volume listed; defaults to ceil(lambda' T) + 10 sqrt(lambda' T) + 20.
    #[arg(long)]
    pub k_max: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PricesArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Price distribution: uniform:lo,hi | normal:mean,sd | exponential:rate.
    #[arg(long, default_value = "uniform:0,1")]
    pub dist: String,
    /// Evaluation grid lo:hi:n; defaults to the support (or its 1e-6 quantiles) with 512 points.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<Grid>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RangeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "uniform:0,1")]
    pub dist: String,
    /// Evaluation grid lo:hi:n over the range; defaults to 512 points on [0, min(width, 10 / rate)].
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<Grid>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = ValidationConfig::default().seed)]
    pub seed: u64,
    /// Monte Carlo replications per simulated regime.
    #[arg(long, default_value_t = ValidationConfig::default().reps)]
    pub reps: usize,
    /// Include the lambda T = 1000 price normality check.
    #[arg(long)]
    pub extended: bool,
    /// Worker threads; the report does not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// CSV file with one positive spread per line and an optional header.
    pub input: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// A rendered table with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Map<String, Value>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

impl Table {
    fn new(columns: Vec<&'static str>) -> Self {
        Self {
            meta: Map::new(),
            columns,
            rows: Vec::new(),
        }
    }

    fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.meta.insert(key.to_string(), value.into());
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut out = String::new();
                for (k, v) in &self.meta {
                    let v = match v {
                        Value::String(s) => s.clone(),
                        Value::Number(n) => n.as_f64().map(fmt_num).unwrap_or_else(|| n.to_string()),
                        other => other.to_string(),
                    };
                    out.push_str(&format!("# {k}={v}\n"));
                }
                out.push_str(&self.columns.join(","));
                out.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(|&x| fmt_num(x)).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Array(r.iter().map(|&x| json_num(x)).collect()))
                    .collect();
                let doc = json!({ "meta": self.meta, "columns": self.columns, "rows": rows });
                let mut s = serde_json::to_string_pretty(&doc).expect("tables serialize");
                s.push('\n');
                s
            }
        }
    }
}

fn json_num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

fn model_meta(table: &mut Table, command: &str, params: &AuctionParams, tol: f64) {
    let eff = params.effective();
    table.set("command", command);
    table.set("version", env!("CARGO_PKG_VERSION"));
    table.set("lambda", params.lambda_total);
    table.set("alpha", params.alpha);
    table.set("T", params.horizon);
    table.set("theta_ask", params.theta_ask);
    table.set("theta_bid", params.theta_bid);
    table.set("lambda_eff", eff.lambda_total);
    table.set("alpha_eff", eff.alpha);
    table.set("tol", tol);
}

pub fn cmd_volume(args: &VolumeArgs) -> Result<Table, CliError> {
    let params = args.model.params()?;
    let tol = args.model.tol;
    let k_max = args.k_max.unwrap_or_else(|| default_k_max(&params));
    let law = asymptotic_volume(&params).ok();
    let mut table = Table::new(vec!["k", "exact_pmf", "exact_pmf_hyp", "asymptotic_density", "tail_bound"]);
    model_meta(&mut table, "volume", &params, tol);
    table.set("k_max", k_max as u64);
    let (mut cumulative, mut errors) = (0.0, 0.0);
    for k in 0..=k_max {
        let d = volume_pmf(&params, k, tol)?;
        let h = volume_pmf_hyp(&params, k, tol)?;
        cumulative += d.value;
        errors += d.abs_error_bound;
        let asym = law.map_or(f64::NAN, |l| l.pdf(k as f64));
        table.rows.push(vec![k as f64, d.value, h.value, asym, (1.0 - cumulative).max(0.0) + errors]);
    }
    Ok(table)
}

fn distribution(spec: &str) -> Result<Box<dyn PriceDistribution>, CliError> {
    Ok(parse_dist(spec)?)
}

/// Default price grid: the support, nudged into its interior, or the
/// `1e-6` and `1 - 1e-6` quantiles on an unbounded side.
fn default_price_grid(dist: &dyn PriceDistribution) -> Vec<f64> {
    let (lo, hi) = dist.support();
    let lo = if lo.is_finite() { lo } else { dist.quantile(GRID_TAIL) };
    let hi = if hi.is_finite() { hi } else { dist.quantile(1.0 - GRID_TAIL) };
    let mut xs = uniform_grid(lo, hi, DEFAULT_GRID_POINTS);
    let nudge = 1e-12 * (hi - lo);
    xs[0] += nudge;
    xs[DEFAULT_GRID_POINTS - 1] -= nudge;
    xs
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

pub fn cmd_prices(args: &PricesArgs) -> Result<Table, CliError> {
    let params = args.model.params()?;
    let tol = args.model.tol;
    let dist = distribution(&args.dist)?;
    let xs = match args.grid {
        Some(g) => uniform_grid(g.lo, g.hi, g.points),
        None => default_price_grid(dist.as_ref()),
    };
    let lower = PriceBoundSeries::lower(&params)?;
    let upper = PriceBoundSeries::upper(&params)?;
    let law = asymptotic_price(&params, dist.as_ref()).ok();
    let mut table = Table::new(vec!["x", "f_L", "f_U", "f_L_error_bound", "f_U_error_bound", "asymptotic_density"]);
    model_meta(&mut table, "prices", &params, tol);
    table.set("dist", dist.spec());
    table.set("conditioning", "at least one bid and one ask live at the close");
    let (mut fl, mut fu) = (Vec::new(), Vec::new());
    for &x in &xs {
        let l = lower.density(dist.as_ref(), x);
        let u = upper.density(dist.as_ref(), x);
        for r in [&l, &u] {
            if r.abs_error_bound > tol {
                return Err(AuctionError::ToleranceNotMet {
                    achieved: r.abs_error_bound,
                    requested: tol,
                }
                .into());
            }
        }
        fl.push(l.value);
        fu.push(u.value);
        let asym = law.map_or(f64::NAN, |n| n.pdf(x));
        table.rows.push(vec![x, l.value, u.value, l.abs_error_bound, u.abs_error_bound, asym]);
    }
    table.set("grid_integral_f_L", trapezoid(&xs, &fl));
    table.set("grid_integral_f_U", trapezoid(&xs, &fu));
    Ok(table)
}

pub fn cmd_range(args: &RangeArgs) -> Result<Table, CliError> {
    let params = args.model.params()?;
    let tol = args.model.tol;
    let dist = distribution(&args.dist)?;
    let rate = asymptotic_range(&params, dist.as_ref())?.rate;
    let (lo, hi) = dist.support();
    let width = hi - lo;
    let deltas = match args.grid {
        Some(g) => uniform_grid(g.lo, g.hi, g.points),
        None => uniform_grid(0.0, width.min(10.0 / rate), DEFAULT_GRID_POINTS),
    };
    let closed_form = args.dist.trim_start().starts_with("uniform");
    let mixture = RangeMixture::new(&params)?;
    let mut table = Table::new(vec![
        "delta",
        "f_R",
        "f_R_error_bound",
        "asymptotic_density",
        "scaled_delta",
        "scaled_density",
    ]);
    model_meta(&mut table, "range", &params, tol);
    table.set("dist", dist.spec());
    table.set("method", if closed_form { "uniform closed form" } else { "Poisson mixture quadrature" });
    table.set("asymptotic_rate", rate);
    table.set("conditioning", "at least one bid and one ask live at the close");
    let mut values = Vec::with_capacity(deltas.len());
    for &d in &deltas {
        let (v, err) = if closed_form {
            // A uniform law on (lo, hi) is the standard one rescaled by its width.
            let v = crate::exact::range_density_uniform(&params, d / width)? / width;
            (v, 0.0)
        } else {
            let r = mixture.density(dist.as_ref(), d, tol)?;
            (r.value, r.abs_error_bound)
        };
        values.push(v);
        let asym = if d >= 0.0 { rate * (-rate * d).exp() } else { 0.0 };
        table.rows.push(vec![d, v, err, asym, rate * d, v / rate]);
    }
    table.set("grid_integral_f_R", trapezoid(&deltas, &values));
    Ok(table)
}

/// Parses spread samples: one value per line, blank lines skipped, and a
/// non-numeric first line taken as a header.
pub fn parse_spreads(text: &str) -> Result<Vec<f64>, CliError> {
    let mut values = Vec::new();
    let mut seen_content = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim().trim_end_matches(',').trim();
        if line.is_empty() {
            continue;
        }
        let first = !seen_content;
        seen_content = true;
        match line.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => values.push(v),
            Ok(v) => return Err(CliError::Usage(format!("line {}: spread must be positive, got {v}", i + 1))),
            Err(_) if first && line.chars().any(|c| c.is_alphabetic()) => {}
            Err(_) => return Err(CliError::Usage(format!("line {}: cannot parse '{line}' as a number", i + 1))),
        }
    }
    if values.is_empty() {
        return Err(CliError::Usage("no spread values found".into()));
    }
    Ok(values)
}

pub fn cmd_fit_spread(args: &FitArgs) -> Result<Table, CliError> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.input.display())))?;
    let mut values = parse_spreads(&text)?;
    let fit = fit_exponential_mle(&values)?;
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mut table = Table::new(vec!["x", "empirical_log_survival", "fitted_log_survival"]);
    table.set("command", "fit-spread");
    table.set("version", env!("CARGO_PKG_VERSION"));
    table.set("input", args.input.display().to_string());
    table.set("rate", fit.rate);
    table.set("sample_size", fit.sample_size as u64);
    table.set("ks_stat", fit.ks_stat);
    table.set("survival", "P(X >= x_(i)) = (n - i + 1) / n");
    for (i, &x) in values.iter().enumerate() {
        let survival = (n - i as f64) / n;
        table.rows.push(vec![x, survival.ln(), -fit.rate * x]);
    }
    Ok(table)
}

fn write_output(output: &OutputArgs, text: &str) -> Result<(), CliError> {
    match &output.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit(table: Table, output: &OutputArgs) -> Result<(), CliError> {
    write_output(output, &table.render(output.format.unwrap_or(Format::Csv)))
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let config = ValidationConfig {
        seed: args.seed,
        reps: args.reps,
        extended: args.extended,
        workers,
    };
    if config.reps < 2 {
        return Err(CliError::Usage("validation needs at least 2 replications".into()));
    }
    let report = run_validation(&config);
    let text = match args.output.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut table = Table::new(vec!["passed", "statistic", "threshold"]);
            table.set("command", "validate");
            table.set("version", report.version.clone());
            table.set("seed", report.seed);
            table.set("reps", report.reps as u64);
            table.set("extended", report.extended);
            table.set("checks", report.checks.iter().map(|c| c.name.clone()).collect::<Vec<_>>().join(";"));
            for c in &report.checks {
                table.rows.push(vec![if c.passed { 1.0 } else { 0.0 }, c.statistic, c.threshold]);
            }
            table.render(Format::Csv)
        }
    };
    write_output(&args.output, &text)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::ValidationFailed)
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Volume(a) => emit(cmd_volume(a)?, &a.output),
        Command::Prices(a) => emit(cmd_prices(a)?, &a.output),
        Command::Range(a) => emit(cmd_range(a)?, &a.output),
        Command::Validate(a) => cmd_validate(a),
        Command::FitSpread(a) => emit(cmd_fit_spread(a)?, &a.output),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            if !matches!(e, CliError::ValidationFailed) {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}
