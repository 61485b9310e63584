//! Command-line front end.
//!
//! Every command is batch: parse flags (plus an optional `--config` file of
//! `key = value` lines, overridden by flags), compute, write one table, exit.
//!
//! Tables are CSV with a header row and numbers printed as `{:.16e}`, or JSON
//! as an array of row objects with the same keys and values. Non-finite and
//! missing cells are empty in CSV and `null` in JSON.
//!
//! Column schemas:
//!
//! | command | columns |
//! |---|---|
//! | `curve` | eps, delta_forward, delta_reverse, delta_two, slack |
//! | `sweep` | n, tv_lower, tv_upper, paper_upper, paper_lower, delta_gap, stability_bound, valid; last row has `n = slope` and the fitted slope under `tv_lower` |
//! | `regime` | n, eps0, a_n, regime, slope |
//! | `regime --diagnostic` (super-critical) | n, k, eps0, tv, p_separation, q_separation, lr_at_zero |
//! | `regime --diagnostic` (sub-critical) | n, k, h, ks_null, ks_alt, defect |
//! | `coupling` | which, seed, n_samples, mismatch_freq, bound, three_sigma, ks_left, ks_right |
//! | `hybrid` | n, k, delta_full, delta_proj, gap, bound, empirical_constant; last row has `n = slope` and the fitted slope under `gap` |
//! | `hybrid --mode cf` | n, k, sup_null, sup_alt |
//! | `tradeoff` | alpha, beta |
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid arguments, 3 failed `--assert`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use crate::bounds::{
    classify_regime, geometric_grid, multivariate_bounds, poisson_sweep, rate_sweep, skellam_sweep,
    subcritical_gaussian_check, supercritical_diagnostic, KRule, Regime, RowBounds, Scaling, SweepResult,
};
use crate::channel::{channel_from_intensities, ChannelSpec};
use crate::coupling::{couple_binom_poisson, couple_multinomial_poisson, couple_poisson_poisson, CouplingReport};
use crate::curve::{delta_np, tradeoff_generic, DeltaResult, Direction, TradeoffCurve};
use crate::dist::{IntDist, LatticeDist};
use crate::hybrid::{
    default_cf_grid, exact_histogram_pair, hybrid_cf, hybrid_delta_gap, hybrid_setup, projected_limit_pair,
    DEFAULT_RARE_CAP,
};
use crate::limit::{
    compound_poisson_limit, poisson_shift_pair, poisson_shift_tradeoff, skellam_shift_pair, LimitParams,
};
use crate::rr::{canonical_pair, composition_pair, rr_config, Calibration, RrConfig};

/// Tail mass dropped when truncating limit laws.
const LIMIT_TAIL: f64 = 1e-15;

pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ASSERT: i32 = 3;

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "CRITSHUFFLE_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "critshuffle",
    version,
    about = "Privacy curves and limit experiments for shuffled randomized response"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Flat `key = value` file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// RNG seed; defaults to $CRITSHUFFLE_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Check the command's bounds and exit 3 if any comparison fails.
    #[arg(long, global = true)]
    pub assert: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hockey-stick curve of one experiment over an eps grid.
    #[command(args_override_self = true)]
    Curve(CurveArgs),
    /// Exact TV rate sweep against the limit experiment.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Classify a local-privacy scaling and run its regime diagnostic.
    #[command(args_override_self = true)]
    Regime(RegimeArgs),
    /// Monte Carlo check of one of the three couplers.
    #[command(args_override_self = true)]
    Coupling(CouplingArgs),
    /// Hybrid (two-dominant) smoothing gap or characteristic-function table.
    #[command(args_override_self = true)]
    Hybrid(HybridArgs),
    /// Trade-off curve knots of one experiment.
    #[command(args_override_self = true)]
    Tradeoff(ExperimentArgs),
}

pub const SUBCOMMANDS: &[&str] = &["curve", "sweep", "regime", "coupling", "hybrid", "tradeoff"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    RrCanonical,
    RrComposition,
    PoissonLimit,
    SkellamLimit,
    MultivariateLimit,
    MultivariateFinite,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[arg(long)]
    pub n: Option<u64>,
    /// Critical constant: `e^eps0 = c^2 n`, `lambda = 1/c^2`.
    #[arg(long)]
    pub c: Option<f64>,
    /// Explicit local level, instead of `--c` for the finite RR experiments.
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub k: Option<u64>,
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Channel specification file for the multivariate experiments.
    #[arg(long, value_name = "PATH")]
    pub channel: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RARE_CAP)]
    pub rare_cap: u64,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Comma-separated eps values.
    #[arg(long, default_value = "0,0.5,1,2")]
    pub eps: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepRegime {
    Poisson,
    Skellam,
    Multivariate,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub regime: SweepRegime,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.5)]
    pub pi: f64,
    /// Comma-separated sizes (`100,1e3`) or `geom:LO:HI:PER` for `10^LO..10^HI` with PER points per decade.
    #[arg(long, default_value = "geom:2:4:2")]
    pub n_grid: String,
    #[arg(long, default_value = "0,1,2")]
    pub eps: String,
    #[arg(long, value_name = "PATH")]
    pub channel: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RARE_CAP)]
    pub rare_cap: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KRuleArg {
    Zero,
    Half,
}

#[derive(Debug, Args)]
pub struct RegimeArgs {
    /// `power:ALPHA`, `canonical:C` or `explicit:E1,E2,...` (one eps0 per grid point).
    #[arg(long)]
    pub scaling: String,
    #[arg(long, default_value = "10,100,1000,10000")]
    pub n_grid: String,
    /// Emit the regime's diagnostic table instead of the `a_n` trace.
    #[arg(long)]
    pub diagnostic: bool,
    #[arg(long, value_enum, default_value_t = KRuleArg::Zero)]
    pub k_rule: KRuleArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Coupler {
    /// Binomial vs Poisson.
    #[value(name = "A1", alias = "a1")]
    A1,
    /// Poisson vs Poisson.
    #[value(name = "A2", alias = "a2")]
    A2,
    /// Multinomial rare counts vs independent Poissons.
    #[value(name = "A3", alias = "a3")]
    A3,
}

#[derive(Debug, Args)]
pub struct CouplingArgs {
    #[arg(long, value_enum)]
    pub which: Coupler,
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Comma-separated category probabilities (A3).
    #[arg(long)]
    pub probs: Option<String>,
    /// Comma-separated indices of the rare categories (A3).
    #[arg(long)]
    pub rare: Option<String>,
    /// Sample count; accepts `1e6`.
    #[arg(long, default_value = "1e6")]
    pub samples: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HybridMode {
    Gap,
    Cf,
}

#[derive(Debug, Args)]
pub struct HybridArgs {
    #[arg(long, value_name = "PATH")]
    pub channel: PathBuf,
    #[arg(long, value_enum, default_value_t = HybridMode::Gap)]
    pub mode: HybridMode,
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    #[arg(long, default_value = "8,16,32,64")]
    pub n_grid: String,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: msg.into(),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        Self::invalid(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn opt(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }

    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Num(_) | Cell::Empty => String::new(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            // Parse back the CSV text so both formats carry the same value.
            Cell::Num(v) if v.is_finite() => Value::from(self.csv().parse::<f64>().unwrap_or(*v)),
            Cell::Num(_) | Cell::Empty => Value::Null,
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Bool(b) => Value::from(*b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = Map::new();
                for (k, c) in self.columns.iter().zip(r) {
                    m.insert((*k).to_string(), c.json());
                }
                Value::Object(m)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&Value::Array(rows)).unwrap_or_default();
        s.push('\n');
        s
    }
}

/// A computed table plus the verdict of `--assert` when requested.
pub struct Report {
    pub table: Table,
    pub assertion: Option<bool>,
}

/// Runs the CLI on raw arguments and returns the exit code.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let report = match run(&cli) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let text = match cli.format {
        Format::Csv => report.table.to_csv(),
        Format::Json => report.table.to_json(),
    };
    let written = match &cli.out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        return fail(CliError {
            code: EXIT_IO,
            message: e,
        });
    }
    match report.assertion {
        Some(false) => {
            eprintln!("assertion failed");
            EXIT_ASSERT
        }
        _ => 0,
    }
}

fn fail(e: CliError) -> i32 {
    eprintln!("error: {}", e.message.replace('\n', " "));
    e.code
}

/// Inserts `--key value` pairs from the `--config` file right after the subcommand,
/// so that flags given on the command line take precedence.
pub fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError {
        code: EXIT_IO,
        message: format!("{path}: {e}"),
    })?;
    let mut extra = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::invalid(format!(
                "{path}:{}: expected key = value",
                lineno + 1
            )));
        };
        let (k, v) = (k.trim().replace('_', "-"), v.trim());
        if k.is_empty() || k == "config" {
            return Err(CliError::invalid(format!("{path}:{}: invalid key", lineno + 1)));
        }
        match v {
            "true" => extra.push(format!("--{k}")),
            "false" => {}
            _ => {
                extra.push(format!("--{k}"));
                extra.push(v.to_string());
            }
        }
    }
    let Some(pos) = strs.iter().skip(1).position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(args);
    };
    let mut out = args;
    let at = pos + 2;
    for (i, e) in extra.into_iter().enumerate() {
        out.insert(at + i, e.into());
    }
    Ok(out)
}

/// Seed from the flag, then the environment, then 0.
pub fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::invalid(format!("{SEED_ENV} = {v:?} is not a 64-bit unsigned integer"))),
        Err(_) => Ok(0),
    }
}

pub fn run(cli: &Cli) -> CliResult<Report> {
    if cli.jobs == 0 {
        return Err(CliError::invalid("--jobs must be >= 1"));
    }
    let seed = resolve_seed(cli.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::invalid(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Curve(a) => cmd_curve(a, cli.assert),
        Command::Sweep(a) => cmd_sweep(a, cli.assert),
        Command::Regime(a) => cmd_regime(a, cli.assert),
        Command::Coupling(a) => cmd_coupling(a, seed, cli.assert),
        Command::Hybrid(a) => cmd_hybrid(a, cli.assert),
        Command::Tradeoff(a) => cmd_tradeoff(a, cli.assert),
    })
}

fn parse_f64(s: &str, what: &str) -> CliResult<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::invalid(format!("{what}: {s:?} is not a finite number")))
}

/// Nonnegative integer, also written as `1e6`.
fn parse_count(s: &str, what: &str) -> CliResult<u64> {
    if let Ok(v) = s.trim().parse::<u64>() {
        return Ok(v);
    }
    let v = parse_f64(s, what)?;
    if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(CliError::invalid(format!("{what}: {s:?} is not a nonnegative integer")));
    }
    Ok(v as u64)
}

fn parse_list(s: &str, what: &str) -> CliResult<Vec<f64>> {
    let v: Vec<f64> = s.split(',').map(|x| parse_f64(x, what)).collect::<CliResult<_>>()?;
    if v.is_empty() {
        return Err(CliError::invalid(format!("{what} is empty")));
    }
    Ok(v)
}

pub fn parse_n_grid(s: &str) -> CliResult<Vec<u64>> {
    let s = s.trim();
    let grid = if let Some(rest) = s.strip_prefix("geom:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::invalid("n-grid: expected geom:LO:HI:PER"));
        }
        let lo = parse_f64(parts[0], "n-grid")?;
        let hi = parse_f64(parts[1], "n-grid")?;
        let per = parse_count(parts[2], "n-grid")?;
        if hi < lo || per == 0 || per > 100 || hi > 12.0 {
            return Err(CliError::invalid("n-grid: need LO <= HI <= 12 and 1 <= PER <= 100"));
        }
        geometric_grid(lo, hi, per as u32)
    } else if s.is_empty() {
        Vec::new()
    } else {
        s.split(',')
            .map(|x| parse_count(x, "n-grid"))
            .collect::<CliResult<_>>()?
    };
    if grid.is_empty() {
        return Err(CliError::invalid("n-grid is empty"));
    }
    if grid[0] == 0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::invalid("n-grid must be positive and strictly increasing"));
    }
    Ok(grid)
}

fn parse_eps(s: &str) -> CliResult<Vec<f64>> {
    let v = parse_list(s, "eps")?;
    if v.iter().any(|e| *e < 0.0) {
        return Err(CliError::invalid("eps values must be >= 0"));
    }
    Ok(v)
}

fn need<T: Copy>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::invalid(format!("--{flag} is required")))
}

fn read_channel(path: &PathBuf) -> CliResult<ChannelSpec> {
    let text = fs::read_to_string(path).map_err(|e| CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })?;
    ChannelSpec::parse(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

enum Pair {
    Int(IntDist, IntDist),
    Lattice(LatticeDist, LatticeDist),
}

impl Pair {
    fn delta(&self, eps: f64, d: Direction) -> DeltaResult {
        match self {
            Pair::Int(p, q) => delta_np(p, q, eps, d),
            Pair::Lattice(p, q) => delta_np(p, q, eps, d),
        }
    }

    fn tradeoff(&self) -> crate::Result<TradeoffCurve> {
        match self {
            Pair::Int(p, q) => tradeoff_generic(p, q),
            Pair::Lattice(p, q) => tradeoff_generic(p, q),
        }
    }
}

fn rr_cfg(a: &ExperimentArgs, k: u64) -> CliResult<RrConfig> {
    let n = need(a.n, "n")?;
    let cal = match (a.c, a.eps0) {
        (Some(c), None) => Calibration::Canonical { c },
        (None, Some(eps0)) => Calibration::Explicit { eps0 },
        _ => return Err(CliError::invalid("give exactly one of --c and --eps0")),
    };
    Ok(rr_config(n, cal, k)?)
}

fn build_pair(a: &ExperimentArgs) -> CliResult<Pair> {
    Ok(match a.experiment {
        Experiment::RrCanonical => {
            let (p, q) = canonical_pair(&rr_cfg(a, 0)?)?;
            Pair::Int(p, q)
        }
        Experiment::RrComposition => {
            let n = need(a.n, "n")?;
            let k = match (a.k, a.pi) {
                (Some(k), None) => k,
                (None, Some(pi)) if (0.0..1.0).contains(&pi) => (pi * n as f64).floor() as u64,
                (None, None) => 0,
                _ => return Err(CliError::invalid("give at most one of --k and --pi, with pi in [0, 1)")),
            };
            let (p, q) = composition_pair(&rr_cfg(a, k)?)?;
            Pair::Int(p, q)
        }
        Experiment::PoissonLimit => {
            let lambda = match (a.lambda, a.c) {
                (Some(l), None) => l,
                (None, Some(c)) => 1.0 / (c * c),
                _ => return Err(CliError::invalid("give exactly one of --lambda and --c")),
            };
            let (p, q) = poisson_shift_pair(lambda, LIMIT_TAIL)?;
            Pair::Int(p, q)
        }
        Experiment::SkellamLimit => {
            let params = LimitParams::new(need(a.c, "c")?, need(a.pi, "pi")?)?;
            let (p, q) = skellam_shift_pair(&params, LIMIT_TAIL)?;
            Pair::Int(p, q)
        }
        Experiment::MultivariateLimit => {
            let spec = read_channel(&need_path(&a.channel)?)?;
            let (p, q) = if spec.is_two_dominant() {
                projected_limit_pair(&hybrid_setup(&spec)?, LIMIT_TAIL)?
            } else {
                compound_poisson_limit(&spec.intensity_spec()?, LIMIT_TAIL)?
            };
            Pair::Lattice(p, q)
        }
        Experiment::MultivariateFinite => {
            let spec = read_channel(&need_path(&a.channel)?)?;
            let n = need(a.n, "n")?;
            let k = a.k.unwrap_or((spec.pi * n as f64).floor() as u64);
            let ch = channel_from_intensities(&spec, n)?;
            let (p, q) = exact_histogram_pair(&ch, k, a.rare_cap)?;
            Pair::Lattice(p, q)
        }
    })
}

fn need_path(p: &Option<PathBuf>) -> CliResult<PathBuf> {
    p.clone().ok_or_else(|| CliError::invalid("--channel is required"))
}

fn cmd_curve(a: &CurveArgs, assert: bool) -> CliResult<Report> {
    let eps = parse_eps(&a.eps)?;
    let pair = build_pair(&a.experiment)?;
    let mut t = Table::new(&["eps", "delta_forward", "delta_reverse", "delta_two", "slack"]);
    let mut forward = Vec::with_capacity(eps.len());
    for &e in &eps {
        let f = pair.delta(e, Direction::Forward);
        let r = pair.delta(e, Direction::Reverse);
        let two = pair.delta(e, Direction::TwoSided);
        forward.push(f.value);
        t.push(vec![
            Cell::Num(e),
            Cell::Num(f.value),
            Cell::Num(r.value),
            Cell::Num(two.value),
            Cell::Num(f.slack.max(r.slack).max(two.slack)),
        ]);
    }
    let assertion = if assert {
        // Finite canonical RR must sit within (1 + e^eps)(2/(c^2 n) + 2/(c^4 n)) of its limit.
        let x = &a.experiment;
        let (Experiment::RrCanonical, Some(c), Some(n)) = (x.experiment, x.c, x.n) else {
            return Err(CliError::invalid(
                "--assert for curve needs --experiment rr-canonical with --c",
            ));
        };
        let (lp, lq) = poisson_shift_pair(1.0 / (c * c), LIMIT_TAIL)?;
        let comp = 2.0 / (c * c * n as f64) + 2.0 / (c.powi(4) * n as f64);
        Some(
            eps.iter()
                .zip(&forward)
                .all(|(&e, &d)| (d - delta_np(&lp, &lq, e, Direction::Forward).value).abs() <= (1.0 + e.exp()) * comp),
        )
    } else {
        None
    };
    Ok(Report { table: t, assertion })
}

fn cmd_sweep(a: &SweepArgs, assert: bool) -> CliResult<Report> {
    let grid = parse_n_grid(&a.n_grid)?;
    let eps = parse_eps(&a.eps)?;
    let result: SweepResult = match a.regime {
        SweepRegime::Poisson => poisson_sweep(a.c, &grid, &eps)?,
        SweepRegime::Skellam => skellam_sweep(a.c, a.pi, &grid, &eps)?,
        SweepRegime::Multivariate => {
            let spec = read_channel(&need_path(&a.channel)?)?;
            let ispec = spec.intensity_spec()?;
            let limit = compound_poisson_limit(&ispec, 1e-13)?;
            let k_at = |n: u64| (spec.pi * n as f64).floor() as u64;
            rate_sweep(
                |n| exact_histogram_pair(&channel_from_intensities(&spec, n)?, k_at(n), a.rare_cap),
                &limit,
                |n| match channel_from_intensities(&spec, n).and_then(|ch| multivariate_bounds(&ch, k_at(n), &ispec)) {
                    Ok(b) => RowBounds {
                        upper: b.tv_p.max(b.tv_q),
                        lower: f64::NAN,
                        valid: true,
                    },
                    Err(_) => RowBounds {
                        upper: f64::NAN,
                        lower: f64::NAN,
                        valid: false,
                    },
                },
                &grid,
                &eps,
            )?
        }
    };
    let mut t = Table::new(&[
        "n",
        "tv_lower",
        "tv_upper",
        "paper_upper",
        "paper_lower",
        "delta_gap",
        "stability_bound",
        "valid",
    ]);
    for r in &result.rows {
        t.push(vec![
            Cell::Int(r.n),
            Cell::Num(r.tv_exact.lower),
            Cell::Num(r.tv_exact.upper),
            Cell::Num(r.upper_bound),
            Cell::Num(r.lower_bound),
            Cell::Num(r.delta_gap),
            Cell::Num(r.stability_bound),
            Cell::Bool(r.valid),
        ]);
    }
    let mut summary = vec![Cell::Text("slope".into()), Cell::opt(result.slope)];
    summary.resize(t.columns.len(), Cell::Empty);
    t.push(summary);
    let assertion = assert.then(|| {
        result.rows.iter().filter(|r| r.valid).all(|r| {
            let upper_ok = !r.upper_bound.is_finite() || r.tv_exact.lower <= r.upper_bound;
            let lower_ok =
                !r.lower_bound.is_finite() || a.regime != SweepRegime::Poisson || r.lower_bound <= r.tv_exact.upper;
            upper_ok && lower_ok
        })
    });
    Ok(Report { table: t, assertion })
}

pub fn parse_scaling(s: &str) -> CliResult<Scaling> {
    let (kind, val) = s
        .split_once(':')
        .ok_or_else(|| CliError::invalid("scaling: expected power:A, canonical:C or explicit:E1,E2,..."))?;
    match kind {
        "power" => Ok(Scaling::Power(parse_f64(val, "scaling")?)),
        "canonical" => Ok(Scaling::Canonical(parse_f64(val, "scaling")?)),
        "explicit" => Ok(Scaling::Explicit(parse_list(val, "scaling")?)),
        _ => Err(CliError::invalid(format!("scaling: unknown kind {kind:?}"))),
    }
}

fn regime_name(r: &Regime) -> &'static str {
    match r {
        Regime::Subcritical => "subcritical",
        Regime::Critical { .. } => "critical",
        Regime::Supercritical => "supercritical",
        Regime::Indeterminate => "indeterminate",
    }
}

fn cmd_regime(a: &RegimeArgs, assert: bool) -> CliResult<Report> {
    let scaling = parse_scaling(&a.scaling)?;
    let grid = parse_n_grid(&a.n_grid)?;
    let verdict = classify_regime(&scaling, &grid)?;
    let k_rule = match a.k_rule {
        KRuleArg::Zero => KRule::Zero,
        KRuleArg::Half => KRule::Fraction(0.5),
    };
    // The diagnostic runs whenever its table or its check is requested.
    let mut diag_ok = None;
    let mut diag_table = None;
    if a.diagnostic || assert {
        match (&verdict.regime, &scaling) {
            (Regime::Supercritical, _) => {
                let d = supercritical_diagnostic(&scaling, k_rule, &grid)?;
                diag_ok = Some(d.nondecreasing);
                let mut t = Table::new(&["n", "k", "eps0", "tv", "p_separation", "q_separation", "lr_at_zero"]);
                for r in &d.rows {
                    t.push(vec![
                        Cell::Int(r.n),
                        Cell::Int(r.k),
                        Cell::Num(r.eps0),
                        Cell::Num(r.tv),
                        Cell::Num(r.p_separation),
                        Cell::Num(r.q_separation),
                        Cell::Num(r.lr_at_zero),
                    ]);
                }
                diag_table = Some(t);
            }
            (Regime::Subcritical, Scaling::Power(alpha)) => {
                let rows = subcritical_gaussian_check(*alpha, k_rule, &grid)?;
                let ks: Vec<f64> = rows.iter().map(|r| r.ks_null + r.defect).collect();
                diag_ok = Some(ks.windows(2).all(|w| w[1] < w[0]));
                let mut t = Table::new(&["n", "k", "h", "ks_null", "ks_alt", "defect"]);
                for r in &rows {
                    t.push(vec![
                        Cell::Int(r.n),
                        Cell::Int(r.k),
                        Cell::Num(r.h),
                        Cell::Num(r.ks_null),
                        Cell::Num(r.ks_alt),
                        Cell::Num(r.defect),
                    ]);
                }
                diag_table = Some(t);
            }
            _ if a.diagnostic => {
                return Err(CliError::invalid(format!(
                    "no diagnostic for a {} {} scaling",
                    regime_name(&verdict.regime),
                    match scaling {
                        Scaling::Power(_) => "power",
                        Scaling::Canonical(_) => "canonical",
                        Scaling::Explicit(_) => "explicit",
                    }
                )))
            }
            _ => {}
        }
    }
    let table = match (a.diagnostic, diag_table) {
        (true, Some(t)) => t,
        _ => {
            let mut t = Table::new(&["n", "eps0", "a_n", "regime", "slope"]);
            for (i, &(n, a_n)) in verdict.a_n_trace.iter().enumerate() {
                t.push(vec![
                    Cell::Int(n),
                    Cell::Num(scaling.eps0_at(i, n)?),
                    Cell::Num(a_n),
                    Cell::Text(regime_name(&verdict.regime).into()),
                    Cell::opt(verdict.slope),
                ]);
            }
            t
        }
    };
    let assertion = assert.then(|| verdict.regime != Regime::Indeterminate && diag_ok.unwrap_or(true));
    Ok(Report { table, assertion })
}

fn parse_indices(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| CliError::invalid(format!("rare: {x:?} is not an index")))
        })
        .collect()
}

fn cmd_coupling(a: &CouplingArgs, seed: u64, assert: bool) -> CliResult<Report> {
    let samples = parse_count(&a.samples, "samples")?;
    let report: CouplingReport = match a.which {
        Coupler::A1 => couple_binom_poisson(need(a.m, "m")?, need(a.p, "p")?, seed, samples)?,
        Coupler::A2 => couple_poisson_poisson(need(a.lambda, "lambda")?, need(a.lambda2, "lambda2")?, seed, samples)?,
        Coupler::A3 => {
            let probs = parse_list(
                a.probs
                    .as_deref()
                    .ok_or_else(|| CliError::invalid("--probs is required"))?,
                "probs",
            )?;
            let rare = parse_indices(
                a.rare
                    .as_deref()
                    .ok_or_else(|| CliError::invalid("--rare is required"))?,
            )?;
            couple_multinomial_poisson(need(a.m, "m")?, &probs, &rare, seed, samples)?
        }
    };
    let name = match a.which {
        Coupler::A1 => "A1",
        Coupler::A2 => "A2",
        Coupler::A3 => "A3",
    };
    let mut t = Table::new(&[
        "which",
        "seed",
        "n_samples",
        "mismatch_freq",
        "bound",
        "three_sigma",
        "ks_left",
        "ks_right",
    ]);
    t.push(vec![
        Cell::Text(name.into()),
        Cell::Int(seed),
        Cell::Int(report.n_samples),
        Cell::Num(report.mismatch_freq),
        Cell::Num(report.bound),
        Cell::Num(report.three_sigma),
        Cell::Num(report.marginal_ks.0),
        Cell::Num(report.marginal_ks.1),
    ]);
    let assertion = assert.then_some(report.mismatch_freq <= report.bound + report.three_sigma);
    Ok(Report { table: t, assertion })
}

fn cmd_hybrid(a: &HybridArgs, assert: bool) -> CliResult<Report> {
    let spec = read_channel(&a.channel)?;
    let grid = parse_n_grid(&a.n_grid)?;
    match a.mode {
        HybridMode::Gap => {
            let rep = hybrid_delta_gap(&spec, a.eps, &grid)?;
            let mut t = Table::new(&[
                "n",
                "k",
                "delta_full",
                "delta_proj",
                "gap",
                "bound",
                "empirical_constant",
            ]);
            for r in &rep.rows {
                t.push(vec![
                    Cell::Int(r.n),
                    Cell::Int(r.k),
                    Cell::Num(r.delta_full),
                    Cell::Num(r.delta_proj),
                    Cell::Num(r.gap),
                    Cell::opt(r.bound),
                    Cell::Num(r.empirical_constant),
                ]);
            }
            let mut summary = vec![
                Cell::Text("slope".into()),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::opt(rep.slope),
            ];
            summary.resize(t.columns.len(), Cell::Empty);
            t.push(summary);
            let assertion = assert.then(|| rep.rows.iter().all(|r| r.bound.is_none_or(|b| r.gap <= b)));
            Ok(Report { table: t, assertion })
        }
        HybridMode::Cf => {
            if assert {
                return Err(CliError::invalid("--assert is not defined for --mode cf"));
            }
            let model = hybrid_setup(&spec)?;
            let cf_grid = default_cf_grid(&model);
            let mut t = Table::new(&["n", "k", "sup_null", "sup_alt"]);
            for &n in &grid {
                let k = (spec.pi * n as f64).floor() as u64;
                let ch = channel_from_intensities(&spec, n)?;
                let cf = hybrid_cf(&model, &ch, k, &cf_grid)?;
                t.push(vec![
                    Cell::Int(n),
                    Cell::Int(k),
                    Cell::Num(cf.sup_null),
                    Cell::Num(cf.sup_alt),
                ]);
            }
            Ok(Report {
                table: t,
                assertion: None,
            })
        }
    }
}

fn cmd_tradeoff(a: &ExperimentArgs, assert: bool) -> CliResult<Report> {
    if assert {
        return Err(CliError::invalid("--assert is not defined for tradeoff"));
    }
    let curve = match (a.experiment, a.lambda, a.c) {
        (Experiment::PoissonLimit, Some(l), None) => poisson_shift_tradeoff(l, None)?,
        (Experiment::PoissonLimit, None, Some(c)) => poisson_shift_tradeoff(1.0 / (c * c), None)?,
        _ => build_pair(a)?.tradeoff()?,
    };
    let mut t = Table::new(&["alpha", "beta"]);
    for &(x, y) in curve.knots() {
        t.push(vec![Cell::Num(x), Cell::Num(y)]);
    }
    Ok(Report {
        table: t,
        assertion: None,
    })
}
