//! Command implementations behind the `runslab` binary. Every command
//! produces a list of [`Row`]s that render as CSV or JSON.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num::{BigRational, ToPrimitive};
use serde::Serialize;

use runslab::asymptotics::{refinement_check, sample_v, LimitModel, VSamplerConfig, E_V};
use runslab::combinatorics::{
    brute_force_max_pmf, mean_runs_discrete, mean_runs_time, run_count_pmf, var_runs_discrete, var_runs_time,
};
use runslab::evolve::{run_sweep, Boundary, Model, SimConfig};
use runslab::pattern::{alpha_decompose, summarize, PatternFunctional};
use runslab::verify::{run_criterion, Overrides, Scale, VerifyOptions};
use runslab::Error;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Parser)]
#[command(name = "runslab", version, about = "Exact and simulated run counts, pattern functionals and queue maxima")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Write the table here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write a JSON run manifest here.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact moments and distributions of the run count.
    Exact(ExactArgs),
    /// Monte Carlo sweep of one model.
    Simulate(SimulateArgs),
    /// Limit constants of a pattern functional.
    Pattern(PatternArgs),
    /// Monte Carlo estimate of E max_t (B(t) - t^2/2).
    Vconst(VconstArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExactArgs {
    #[arg(long)]
    pub n: u64,
    /// Number of ones inserted.
    #[arg(long)]
    pub m: Option<u64>,
    /// Randomized time in [0, 1].
    #[arg(long)]
    pub t: Option<f64>,
    /// Print the full pmf of X(n, m).
    #[arg(long, requires = "m")]
    pub pmf: bool,
    /// Print the exact distribution of the maximum over all n! orders.
    #[arg(long)]
    pub max_pmf: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Runs,
    RunsCyclic,
    RunsTime,
    Pattern,
    Pq,
    LazyHash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryArg {
    Linear,
    Cyclic,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Linear => Boundary::Linear,
            BoundaryArg::Cyclic => Boundary::Cyclic,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PatternSource {
    /// Pattern table file: window length, then one `bits value` line per window.
    #[arg(long, conflicts_with = "run_length")]
    pub psi_file: Option<PathBuf>,
    /// Runs of exactly d ones.
    #[arg(long)]
    pub run_length: Option<usize>,
}

impl PatternSource {
    fn load(&self) -> Result<Option<PatternFunctional>, CliError> {
        if let Some(path) = &self.psi_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            return Ok(Some(text.parse()?));
        }
        match self.run_length {
            Some(d) => Ok(Some(PatternFunctional::run_length(d)?)),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: u64,
    /// Base seed; falls back to RUNSLAB_SEED, then 1.
    #[arg(long, env = "RUNSLAB_SEED")]
    pub seed: Option<u64>,
    /// Comma-separated sample times in [0, 1].
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Boundary for pattern models (default cyclic).
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryArg>,
    #[command(flatten)]
    pub pattern: PatternSource,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PatternArgs {
    #[command(flatten)]
    pub source: PatternSource,
    /// Also list the nonzero decomposition coefficients.
    #[arg(long)]
    pub report: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VconstArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 4.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 100_000)]
    pub paths: u64,
    #[arg(long, env = "RUNSLAB_SEED")]
    pub seed: Option<u64>,
    /// Use the plain grid maximum without the bridge correction.
    #[arg(long)]
    pub no_bridge: bool,
    /// Also rerun at half the step on common noise.
    #[arg(long)]
    pub refine: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleArg {
    Quick,
    Full,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = ScaleArg::Quick)]
    pub scale: ScaleArg,
    #[arg(long, env = "RUNSLAB_SEED")]
    pub seed: Option<u64>,
    /// Run only these criteria (repeatable).
    #[arg(long = "criterion", value_parser = clap::value_parser!(u8).range(1..=9))]
    pub criteria: Vec<u8>,
    /// Replace the runs variance constant 1/16.
    #[arg(long)]
    pub inject_runs_sigma2: Option<f64>,
    /// Replace the runs correction factor 1/2.
    #[arg(long)]
    pub inject_runs_beta: Option<f64>,
    /// Replace E V.
    #[arg(long)]
    pub inject_e_v: Option<f64>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// A cell value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Rational(BigRational),
    Text(String),
}

impl Value {
    pub fn render(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Float(x) => format_float(*x),
            Value::Rational(r) => format!("{}/{}", r.numer(), r.denom()),
            Value::Text(t) => t.clone(),
        }
    }
}

/// 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub model: String,
    pub n: Option<u64>,
    pub reps: Option<u64>,
    pub seed: Option<u64>,
    pub quantity: String,
    pub value: Value,
    pub se: Option<f64>,
    pub reference: Option<Value>,
    pub band: Option<f64>,
    pub pass: Option<bool>,
}

impl Row {
    fn new(model: &str, quantity: impl Into<String>, value: Value) -> Self {
        Self {
            model: model.to_string(),
            n: None,
            reps: None,
            seed: None,
            quantity: quantity.into(),
            value,
            se: None,
            reference: None,
            band: None,
            pass: None,
        }
    }

    fn n(mut self, n: u64) -> Self {
        self.n = Some(n);
        self
    }

    fn run(mut self, reps: u64, seed: u64) -> Self {
        self.reps = Some(reps);
        self.seed = Some(seed);
        self
    }

    fn se(mut self, se: f64) -> Self {
        self.se = Some(se);
        self
    }

    fn reference(mut self, reference: Value) -> Self {
        self.reference = Some(reference);
        self
    }

    /// Reference with a pass/fail band on `|value - reference|`.
    fn banded(mut self, reference: f64, band: f64) -> Self {
        let v = match &self.value {
            Value::Int(i) => *i as f64,
            Value::Float(x) => *x,
            Value::Rational(r) => r.to_f64().unwrap_or(f64::NAN),
            Value::Text(_) => f64::NAN,
        };
        self.reference = Some(Value::Float(reference));
        self.band = Some(band);
        self.pass = Some((v - reference).abs() <= band);
        self
    }

    fn cells(&self) -> [String; 10] {
        let opt = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
        let optf = |x: Option<f64>| x.map(format_float).unwrap_or_default();
        [
            self.model.clone(),
            opt(self.n),
            opt(self.reps),
            opt(self.seed),
            self.quantity.clone(),
            self.value.render(),
            optf(self.se),
            self.reference.as_ref().map(Value::render).unwrap_or_default(),
            optf(self.band),
            self.pass.map(|p| p.to_string()).unwrap_or_default(),
        ]
    }
}

pub const CSV_HEADER: [&str; 10] = ["model", "n", "reps", "seed", "quantity", "value", "se", "reference", "band", "pass"];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(rows: &[Row]) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.cells().iter().map(|c| csv_field(c)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct JsonRow {
    model: String,
    n: Option<u64>,
    reps: Option<u64>,
    seed: Option<u64>,
    quantity: String,
    value: String,
    se: Option<String>,
    reference: Option<String>,
    band: Option<String>,
    pass: Option<bool>,
}

impl From<&Row> for JsonRow {
    fn from(r: &Row) -> Self {
        JsonRow {
            model: r.model.clone(),
            n: r.n,
            reps: r.reps,
            seed: r.seed,
            quantity: r.quantity.clone(),
            value: r.value.render(),
            se: r.se.map(format_float),
            reference: r.reference.as_ref().map(Value::render),
            band: r.band.map(format_float),
            pass: r.pass,
        }
    }
}

pub fn render_json(rows: &[Row]) -> String {
    let rows: Vec<JsonRow> = rows.iter().map(JsonRow::from).collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("rows serialize");
    s.push('\n');
    s
}

pub fn render(rows: &[Row], format: Format) -> String {
    match format {
        Format::Csv => render_csv(rows),
        Format::Json => render_json(rows),
    }
}

/// What a command produced.
#[derive(Debug)]
pub struct Outcome {
    pub rows: Vec<Row>,
    /// Human-readable lines printed before the table (verify only).
    pub summary: Vec<String>,
    pub success: bool,
    pub config: serde_json::Value,
}

impl Outcome {
    fn table(rows: Vec<Row>, config: serde_json::Value) -> Self {
        Self {
            rows,
            summary: Vec::new(),
            success: true,
            config,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.success {
            0
        } else {
            1
        }
    }
}

fn rational(r: BigRational) -> Value {
    Value::Rational(r)
}

fn to_value<T: Serialize>(x: &T) -> serde_json::Value {
    serde_json::to_value(x).unwrap_or(serde_json::Value::Null)
}

pub fn cmd_exact(args: &ExactArgs) -> Result<Outcome, CliError> {
    let n = args.n;
    let mut rows = Vec::new();
    if args.m.is_none() && args.t.is_none() && !args.max_pmf {
        return Err(CliError::Usage("exact needs --m, --t or --max-pmf".into()));
    }
    if let Some(m) = args.m {
        let mean = mean_runs_discrete(n, m)?;
        rows.push(Row::new("runs", "mean", rational(mean.clone())).n(n));
        rows.push(Row::new("runs", "mean_decimal", Value::Float(mean.to_f64().unwrap())).n(n));
        if n >= 2 {
            let var = var_runs_discrete(n, m)?;
            rows.push(Row::new("runs", "var", rational(var.clone())).n(n));
            rows.push(Row::new("runs", "var_decimal", Value::Float(var.to_f64().unwrap())).n(n));
        }
        if args.pmf {
            for (k, p) in run_count_pmf(n, m)?.probs {
                rows.push(Row::new("runs", format!("P(X={k}|m={m})"), rational(p)).n(n));
            }
        }
    }
    if let Some(t) = args.t {
        rows.push(Row::new("runs-time", format!("mean_t={t}"), Value::Float(mean_runs_time(n, t)?)).n(n));
        if n >= 2 {
            rows.push(Row::new("runs-time", format!("var_t={t}"), Value::Float(var_runs_time(n, t)?)).n(n));
        }
    }
    if args.max_pmf {
        let pmf = brute_force_max_pmf(n as usize)?;
        let mean = pmf
            .iter()
            .fold(BigRational::from_integer(0.into()), |acc, (&k, p)| acc + BigRational::from_integer(k.into()) * p);
        for (k, p) in pmf {
            rows.push(Row::new("runs", format!("P(max={k})"), rational(p)).n(n));
        }
        rows.push(Row::new("runs", "mean_max", rational(mean.clone())).n(n));
        rows.push(Row::new("runs", "mean_max_decimal", Value::Float(mean.to_f64().unwrap())).n(n));
    }
    Ok(Outcome::table(rows, to_value(args)))
}

fn model_from_args(args: &SimulateArgs) -> Result<Model, CliError> {
    let boundary = args.boundary.map(Boundary::from);
    let pattern = args.pattern.load()?;
    if pattern.is_some() && args.model != ModelArg::Pattern {
        return Err(CliError::Usage("--psi-file/--run-length only apply to --model pattern".into()));
    }
    Ok(match args.model {
        ModelArg::Runs => Model::Runs(boundary.unwrap_or(Boundary::Linear)),
        ModelArg::RunsCyclic => Model::Runs(Boundary::Cyclic),
        ModelArg::RunsTime => Model::RunsTime,
        ModelArg::Pq => Model::PriorityQueue,
        ModelArg::LazyHash => Model::LazyHash,
        ModelArg::Pattern => Model::Pattern {
            psi: pattern.ok_or_else(|| CliError::Usage("--model pattern needs --psi-file or --run-length".into()))?,
            boundary: boundary.unwrap_or(Boundary::Cyclic),
        },
    })
}

fn exact_grid_mean(model: &Model, n: usize, t: f64) -> Option<f64> {
    match model {
        Model::Runs(Boundary::Linear) => {
            let m = ((n as f64 * t).floor() as u64).min(n as u64);
            mean_runs_discrete(n as u64, m).ok()?.to_f64()
        }
        Model::RunsTime => mean_runs_time(n as u64, t).ok(),
        _ => None,
    }
}

fn limit_model(model: &Model) -> Option<LimitModel> {
    match model {
        Model::Runs(_) | Model::RunsTime => Some(LimitModel::Runs),
        Model::PriorityQueue | Model::LazyHash => Some(LimitModel::PriorityQueue),
        Model::Pattern { psi, .. } => LimitModel::pattern(psi).ok(),
    }
}

pub fn cmd_simulate(args: &SimulateArgs, jobs: Option<usize>) -> Result<Outcome, CliError> {
    let model = model_from_args(args)?;
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    let grid = args.grid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec());
    let config = SimConfig::new(model.clone(), args.n, args.reps, seed)
        .with_grid(grid.clone())
        .with_jobs(jobs);
    let s = run_sweep(&config)?;
    let tag = model.tag().name();
    let (n, reps) = (args.n as u64, args.reps);
    let row = |q: &str, v: f64, se: f64| Row::new(tag, q, Value::Float(v)).n(n).run(reps, seed).se(se);
    let mut rows = Vec::new();
    let mut max_row = row("mean_max", s.max.mean(), s.max.se());
    if let Some(limit) = limit_model(&model) {
        if let Ok(pred) = limit.predict_max_mean(n) {
            max_row = max_row.reference(Value::Float(pred));
        }
    }
    rows.push(max_row);
    rows.push(row("var_max", s.max.variance(), s.max.variance_se_normal()));
    rows.push(row("mean_mid", s.mid.mean(), s.mid.se()));
    rows.push(row("mean_max_minus_mid", s.excess.mean(), s.excess.se()));
    rows.push(row("mean_argmax_fraction", s.argmax.mean(), s.argmax.se()));
    for (i, &t) in grid.iter().enumerate() {
        let cov = s.grid.covariance(i, i);
        let se = (cov / reps as f64).sqrt();
        let mut r = row(&format!("mean_at_t={t}"), s.grid.mean(i), se);
        if let Some(exact) = exact_grid_mean(&model, args.n, t) {
            r = r.banded(exact, 4.0 * se);
        }
        rows.push(r);
        rows.push(row(&format!("var_at_t={t}"), cov, cov * (2.0 / (reps.max(2) - 1) as f64).sqrt()));
    }
    Ok(Outcome::table(rows, to_value(args)))
}

pub fn cmd_pattern(args: &PatternArgs) -> Result<Outcome, CliError> {
    let psi = args
        .source
        .load()?
        .ok_or_else(|| CliError::Usage("pattern needs --psi-file or --run-length".into()))?;
    let s = summarize(&psi)?;
    let exact_t0 = runslab::pattern::locate_maximum(&s.g0)?.exact;
    let tag = "pattern";
    let f = |q: &str, v: f64| Row::new(tag, q, Value::Float(v));
    let mut rows = vec![
        Row::new(tag, "window_len", Value::Int(psi.window_len() as i64)),
        Row::new(tag, "g0", Value::Text(s.g0.to_string())),
    ];
    if let Some(r) = exact_t0 {
        rows.push(Row::new(tag, "t0", rational(r)));
    }
    rows.push(f("t0_decimal", s.t0));
    rows.push(f("g0_t0", s.g0_at_t0));
    rows.push(f("g0pp_t0", s.g0_second_derivative));
    rows.push(f("sigma2", s.sigma2));
    rows.push(f("sigma2_route_b", s.sigma2_routes.route_b));
    rows.push(f("sigma_star2", s.sigma_star2));
    rows.push(f("sigma_star2_route_b", s.sigma_star2_routes.route_b));
    rows.push(f("beta", s.beta));
    if args.report {
        for (alpha, g) in &alpha_decompose(&psi).terms {
            rows.push(Row::new(tag, format!("g_{alpha}"), Value::Text(g.to_string())));
        }
    }
    Ok(Outcome::table(rows, to_value(args)))
}

pub fn cmd_vconst(args: &VconstArgs, jobs: Option<usize>) -> Result<Outcome, CliError> {
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    let config = VSamplerConfig {
        bridge: !args.no_bridge,
        jobs,
        ..VSamplerConfig::new(args.step, args.horizon, args.paths, seed)
    };
    let est = sample_v(&config)?;
    let tag = "brownian-parabola";
    let row = |q: &str, v: f64| Row::new(tag, q, Value::Float(v)).run(args.paths, seed);
    let (lo, hi) = est.ci();
    let mut rows = vec![
        row("mean_V", est.mean).se(est.se).banded(E_V, 0.02),
        row("sd_V", est.sd),
        row("ci95_low", lo),
        row("ci95_high", hi),
    ];
    if args.refine {
        let check = refinement_check(&config)?;
        rows.push(row("mean_V_h", check.coarse.mean).se(check.coarse.se));
        rows.push(row("mean_V_h/2", check.fine.mean).se(check.fine.se));
        rows.push(row("shift_h_to_h/2", check.shift()).banded(0.0, check.coarse.half_width()));
    }
    Ok(Outcome::table(rows, to_value(args)))
}

pub fn cmd_verify(args: &VerifyArgs, jobs: Option<usize>) -> Result<Outcome, CliError> {
    let scale = match args.scale {
        ScaleArg::Quick => Scale::Quick,
        ScaleArg::Full => Scale::Full,
    };
    let opts = VerifyOptions {
        jobs,
        overrides: Overrides {
            runs_sigma2: args.inject_runs_sigma2,
            runs_beta: args.inject_runs_beta,
            e_v: args.inject_e_v,
        },
        ..VerifyOptions::new(scale, args.seed.unwrap_or(DEFAULT_SEED))
    };
    let ids: Vec<u8> = if args.criteria.is_empty() { (1..=9).collect() } else { args.criteria.clone() };
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut success = true;
    for id in ids {
        let result = run_criterion(id, &opts)?;
        success &= result.pass();
        summary.push(result.to_string());
        for c in result.failures() {
            summary.push(format!("    {}", c.report));
        }
        for c in &result.checks {
            let r = &c.report;
            let mut row = Row::new(&c.model, format!("c{id}:{}", r.quantity), Value::Float(r.empirical));
            row.n = (c.n > 0).then_some(c.n);
            if c.reps > 0 {
                row = row.run(c.reps, c.seed);
            }
            row.se = (r.se > 0.0).then_some(r.se);
            row.reference = Some(Value::Float(r.reference));
            row.band = Some(r.band);
            row.pass = Some(r.pass);
            rows.push(row);
        }
    }
    Ok(Outcome {
        rows,
        summary,
        success,
        config: to_value(args),
    })
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let jobs = cli.global.jobs;
    match &cli.command {
        Command::Exact(a) => cmd_exact(a),
        Command::Simulate(a) => cmd_simulate(a, jobs),
        Command::Pattern(a) => cmd_pattern(a),
        Command::Vconst(a) => cmd_vconst(a, jobs),
        Command::Verify(a) => cmd_verify(a, jobs),
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command_line: Vec<String>,
    command: &'a str,
    config: &'a serde_json::Value,
    base_seed: Option<u64>,
    version: &'static str,
    wall_time_s: f64,
    success: bool,
    outputs: Vec<JsonRow>,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Exact(_) => "exact",
        Command::Simulate(_) => "simulate",
        Command::Pattern(_) => "pattern",
        Command::Vconst(_) => "vconst",
        Command::Verify(_) => "verify",
    }
}

fn base_seed(c: &Command) -> Option<u64> {
    match c {
        Command::Simulate(a) => Some(a.seed.unwrap_or(DEFAULT_SEED)),
        Command::Vconst(a) => Some(a.seed.unwrap_or(DEFAULT_SEED)),
        Command::Verify(a) => Some(a.seed.unwrap_or(DEFAULT_SEED)),
        _ => None,
    }
}

/// Parses, runs, writes outputs and returns the process exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let start = Instant::now();
    let outcome = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let table = render(&outcome.rows, cli.global.format);
    let is_verify = matches!(cli.command, Command::Verify(_));
    let result = (|| -> std::io::Result<()> {
        for line in &outcome.summary {
            println!("{line}");
        }
        match &cli.global.out {
            Some(path) => std::fs::write(path, &table)?,
            None if !is_verify => print!("{table}"),
            None => {}
        }
        if let Some(path) = &cli.global.manifest {
            let manifest = RunManifest {
                command_line: args.clone(),
                command: command_name(&cli.command),
                config: &outcome.config,
                base_seed: base_seed(&cli.command),
                version: env!("CARGO_PKG_VERSION"),
                wall_time_s: start.elapsed().as_secs_f64(),
                success: outcome.success,
                outputs: outcome.rows.iter().map(JsonRow::from).collect(),
            };
            std::fs::write(path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        eprintln!("error: {}", CliError::Io(e));
        return 2;
    }
    outcome.exit_code()
}
