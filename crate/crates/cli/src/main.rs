//! `hh-lab`: command-line front end for K-Riemann sums, the bracketing
//! integration driver, convexity checks, and Hermite-Hadamard verification.
//!
//! Every subcommand echoes its configuration into the report it emits, and
//! identical argv + seed produce byte-identical JSON. Exit codes: 0 when the
//! verification passed or the computation converged (an exact closed-form
//! result counts even if the iterative gap test never fired), 1 when a
//! violation was found or the run did not converge (the report is still
//! emitted), 2 for usage and parse errors.

use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hh_lab_core::convexity::{
    find_violation, jensen_check, k_convex_check, second_difference_check, support_line,
    ConvexityReport, Verdict, ViolationWitness,
};
use hh_lab_core::expr::{lookup_builtin, parse, Domain, FuncDef, Shape};
use hh_lab_core::hh::{hh_scan, reconstruct_primitive, sandwich, Primitive, ReconstructedPoint};
use hh_lab_core::kriemann::{
    as_affine, integrate, sum_report, BoundStrategy, CellOracle, IntegrateOptions, Schedule,
};
use hh_lab_core::partition::{KField, KPartition};
use hh_lab_core::{Error, Num, Rational, Result};

const GRAMMAR_NOTE: &str = "Functions are builtin names (square, quartic, abs, exp, relu, \
neg_square, sine, affine) or expressions in x using +, -, *, /, ^k, abs, max, min, exp, log, \
sin, cos and rational literals. Write negative constants with subtraction or parentheses, \
for example \"0 - x^2\" or \"(0-1)*x\", so they are not mistaken for flags. Rational-valued \
arguments accept \"p/q\", plain integers, and exact decimals like 0.25.";

#[derive(Parser)]
#[command(
    name = "hh-lab",
    version,
    about = "K-Riemann integration over rational partitions and Hermite-Hadamard checks",
    after_help = GRAMMAR_NOTE
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bracketing integration along a dyadic refinement schedule
    Integrate(IntegrateCmd),
    /// Upper and lower K-sums over one partition
    Sums(SumsCmd),
    /// Midpoint / telescoping / trapezoid sandwich trace for a pair (f, F)
    Sandwich(SandwichCmd),
    /// Scan the two-sided midpoint-quotient-average system over many pairs
    #[command(name = "hh-check")]
    HhCheck(HhCheckCmd),
    /// Sample-based convexity verdicts (Jensen, rational weights, or a grid)
    Convexity(ConvexityCmd),
    /// Search for a pair breaking either inequality for a claimed (f, F)
    Violation(ViolationCmd),
    /// Construct a numeric support line of a convex function at a point
    #[command(name = "support-line")]
    SupportLine(SupportLineCmd),
    /// Tabulate a primitive F(x) = integral of f from a base point
    Reconstruct(ReconstructCmd),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
    Plain,
}

impl OutFormat {
    fn name(self) -> &'static str {
        match self {
            OutFormat::Json => "json",
            OutFormat::Csv => "csv",
            OutFormat::Plain => "plain",
        }
    }
}

#[derive(Args)]
struct FunctionArg {
    /// Builtin name or expression in x
    #[arg(short = 'f', long = "function", value_name = "EXPR")]
    function: String,
}

#[derive(Args)]
struct PrimitiveArg {
    /// Antiderivative as a builtin name or expression; defaults to the
    /// builtin's recorded one
    #[arg(short = 'F', long = "primitive", value_name = "EXPR")]
    primitive: Option<String>,
}

#[derive(Args)]
struct IntervalArg {
    /// Interval endpoints as rationals, e.g. --interval 0 1 or --interval -1/2 3/2
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_hyphen_values = true, required = true)]
    interval: Vec<String>,
}

#[derive(Args)]
struct FieldArg {
    /// Coefficient field tag carried through reports: q (rationals) or r (reals)
    #[arg(long, default_value = "q")]
    field: String,
}

#[derive(Parser)]
struct IntegrateCmd {
    #[command(flatten)]
    function: FunctionArg,
    #[command(flatten)]
    interval: IntervalArg,
    /// Cell bound strategy: endpoint, dense:N, or oracle (builtins only)
    #[arg(long, value_name = "STRATEGY")]
    strategy: Option<String>,
    /// Convergence tolerance for the bracket gap
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Maximum dyadic refinement depth
    #[arg(long, default_value_t = 20)]
    depth: u32,
    /// Require the result to be an exact rational (exit 1 otherwise)
    #[arg(long)]
    exact: bool,
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
}

#[derive(Parser)]
struct SumsCmd {
    #[command(flatten)]
    function: FunctionArg,
    #[command(flatten)]
    interval: IntervalArg,
    /// Partition: uniform:N, dyadic:D, farey:N, or random:N,MAXDEN (seeded)
    #[arg(long, default_value = "uniform:8")]
    partition: String,
    /// Cell bound strategy; defaults to endpoint for declared
    /// convex/concave/affine shapes and dense:5 otherwise
    #[arg(long, value_name = "STRATEGY")]
    strategy: Option<String>,
    /// Seed for the random partition form
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
}

#[derive(Parser)]
struct SandwichCmd {
    #[command(flatten)]
    function: FunctionArg,
    #[command(flatten)]
    primitive: PrimitiveArg,
    #[command(flatten)]
    interval: IntervalArg,
    /// Maximum dyadic depth of the trace (depth d refines to 2^(d-1) cells)
    #[arg(long, default_value_t = 12)]
    depth: u32,
    /// Stop once trapezoid - midpoint is within this gap
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
}

#[derive(Parser)]
struct HhCheckCmd {
    #[command(flatten)]
    function: FunctionArg,
    #[command(flatten)]
    primitive: PrimitiveArg,
    #[command(flatten)]
    interval: IntervalArg,
    /// Random pairs on top of the deterministic grid
    #[arg(long, default_value_t = 1000)]
    pairs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Slack granted to each inequality before it counts as violated
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConvexityMode {
    /// Midpoint convexity over sampled pairs
    Jensen,
    /// Rational weights p/q with bounded denominator
    KConvex,
    /// Chord test along a partition grid
    Grid,
}

impl ConvexityMode {
    fn name(self) -> &'static str {
        match self {
            ConvexityMode::Jensen => "jensen",
            ConvexityMode::KConvex => "k-convex",
            ConvexityMode::Grid => "grid",
        }
    }
}

#[derive(Parser)]
struct ConvexityCmd {
    #[command(flatten)]
    function: FunctionArg,
    #[command(flatten)]
    interval: IntervalArg,
    #[arg(long, value_enum, default_value_t = ConvexityMode::Jensen)]
    mode: ConvexityMode,
    /// Random pairs on top of the deterministic grid (jensen / k-convex)
    #[arg(long, default_value_t = 1000)]
    pairs: u64,
    /// Largest weight denominator (k-convex)
    #[arg(long, default_value_t = 8)]
    max_den: i64,
    /// Grid for --mode grid, same forms as the sums subcommand
    #[arg(long, default_value = "uniform:16")]
    partition: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
}

#[derive(Parser)]
struct ViolationCmd {
    #[command(flatten)]
    function: FunctionArg,
    #[command(flatten)]
    primitive: PrimitiveArg,
    #[command(flatten)]
    interval: IntervalArg,
    /// Total pair budget, deterministic grid included
    #[arg(long, default_value_t = 10000)]
    pairs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
}

#[derive(Parser)]
struct SupportLineCmd {
    #[command(flatten)]
    function: FunctionArg,
    /// Interior point the line must touch
    #[arg(long, value_name = "Z", allow_hyphen_values = true)]
    at: String,
    /// Initial step of the slope extrapolation
    #[arg(long, default_value_t = 1e-2)]
    h0: f64,
    /// Slack allowed before a probe point counts as above the line
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
}

#[derive(Parser)]
struct ReconstructCmd {
    #[command(flatten)]
    function: FunctionArg,
    /// Base point where F vanishes
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    base: String,
    /// Comma-separated rational points to tabulate
    #[arg(long, allow_hyphen_values = true, value_name = "X1,X2,...")]
    points: String,
    /// Per-point integration tolerance
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[command(flatten)]
    field: FieldArg,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
}

/// The configuration echoed at the head of every report.
#[derive(Serialize)]
struct RunConfig {
    command: &'static str,
    function: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    primitive: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    interval: Option<[String; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    point: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    partition: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<&'static str>,
    field: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_den: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    out: &'static str,
}

impl RunConfig {
    fn new(command: &'static str, function: &str, field: KField, out: OutFormat) -> Self {
        RunConfig {
            command,
            function: function.to_string(),
            primitive: None,
            interval: None,
            point: None,
            points: None,
            partition: None,
            mode: None,
            field: field.to_string(),
            strategy: None,
            tol: None,
            depth: None,
            pairs: None,
            max_den: None,
            seed: None,
            out: out.name(),
        }
    }
}

fn main() -> ExitCode {
    restore_sigpipe_default();
    init_thread_cap();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            // a missing support line is a verification verdict, not misuse
            ExitCode::from(if matches!(e, Error::NoSupport(_)) {
                1
            } else {
                2
            })
        }
    }
}

/// Rust masks SIGPIPE, turning `hh-lab ... | head` into a panic when head
/// closes the pipe. Dying on the signal like any other pipeline filter is
/// the behavior callers expect.
fn restore_sigpipe_default() {
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

/// HH_LAB_THREADS caps the worker pool for scan parallelism. Results do not
/// depend on it; only wall time does.
fn init_thread_cap() {
    if let Some(n) = std::env::var("HH_LAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn run(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::Integrate(c) => run_integrate(c),
        Cmd::Sums(c) => run_sums(c),
        Cmd::Sandwich(c) => run_sandwich(c),
        Cmd::HhCheck(c) => run_hh_check(c),
        Cmd::Convexity(c) => run_convexity(c),
        Cmd::Violation(c) => run_violation(c),
        Cmd::SupportLine(c) => run_support_line(c),
        Cmd::Reconstruct(c) => run_reconstruct(c),
    }
}

fn run_integrate(c: IntegrateCmd) -> Result<u8> {
    let f = resolve_function(&c.function.function)?;
    let (a, b) = parse_interval(&c.interval)?;
    let field = KField::from_str(&c.field.field)?;
    let strategy = resolve_strategy(c.strategy.as_deref(), &f)?;
    let opts = IntegrateOptions {
        tol: c.tol,
        schedule: Schedule::Dyadic { max_depth: c.depth },
        strategy: Some(strategy.clone()),
    };
    let est = integrate(&f, &a, &b, &opts)?;

    let mut config = RunConfig::new("integrate", &c.function.function, field, c.out);
    config.interval = Some([a.to_string(), b.to_string()]);
    config.strategy = Some(strategy.descriptor());
    config.tol = Some(c.tol);
    config.depth = Some(c.depth);
    match c.out {
        OutFormat::Json => emit_json(&config, &est)?,
        OutFormat::Csv => {
            print_config_comment(&config)?;
            println!("depth,lower,upper,midpoint,trapezoid");
            for r in &est.rows {
                println!(
                    "{},{},{},{},{}",
                    r.depth, r.lower, r.upper, r.midpoint, r.trapezoid
                );
            }
        }
        OutFormat::Plain => {
            print_config_comment(&config)?;
            println!("value = {}", est.value);
            println!("bracket = [{}, {}]", est.lower, est.upper);
            println!("converged = {}", est.converged);
            println!("exact = {}", est.exact);
            println!("schedule = {}", est.schedule.join(" "));
        }
    }
    let mut ok = est.converged || est.exact;
    if c.exact {
        ok = ok && est.exact;
    }
    Ok(if ok { 0 } else { 1 })
}

fn run_sums(c: SumsCmd) -> Result<u8> {
    let f = resolve_function(&c.function.function)?;
    let (a, b) = parse_interval(&c.interval)?;
    let field = KField::from_str(&c.field.field)?;
    let p = parse_partition(&c.partition, a.clone(), b.clone(), field, c.seed)?;
    let strategy = resolve_strategy(c.strategy.as_deref(), &f)?;
    let report = sum_report(&f, &p, &strategy)?;

    let mut config = RunConfig::new("sums", &c.function.function, field, c.out);
    config.interval = Some([a.to_string(), b.to_string()]);
    config.partition = Some(c.partition.clone());
    config.strategy = Some(strategy.descriptor());
    config.seed = Some(c.seed);
    match c.out {
        OutFormat::Json => emit_json(&config, &report)?,
        OutFormat::Csv => return Err(csv_unsupported("sums")),
        OutFormat::Plain => {
            print_config_comment(&config)?;
            println!("cells = {}", report.partition.n_cells());
            println!("lower = {}", report.lower);
            println!("upper = {}", report.upper);
            println!("exact = {}", report.exact);
        }
    }
    Ok(0)
}

fn run_sandwich(c: SandwichCmd) -> Result<u8> {
    let f = resolve_function(&c.function.function)?;
    let (x, y) = parse_interval(&c.interval)?;
    let field = KField::from_str(&c.field.field)?;
    let (prim, prim_text) = resolve_primitive(&f, c.primitive.primitive.as_deref())?;
    let rep = sandwich(&f, &Primitive::Symbolic(prim), &x, &y, c.depth, c.tol)?;

    let mut config = RunConfig::new("sandwich", &c.function.function, field, c.out);
    config.primitive = Some(prim_text);
    config.interval = Some([x.to_string(), y.to_string()]);
    config.depth = Some(c.depth);
    config.tol = Some(c.tol);
    match c.out {
        OutFormat::Json => emit_json(&config, &rep)?,
        OutFormat::Csv => {
            print_config_comment(&config)?;
            println!("depth,n_cells,midpoint_sum,delta_F,trapezoid_sum,gap");
            for r in &rep.rows {
                println!(
                    "{},{},{},{},{},{}",
                    r.depth, r.n_cells, r.midpoint_sum, r.delta_f, r.trapezoid_sum, r.gap
                );
            }
        }
        OutFormat::Plain => {
            print_config_comment(&config)?;
            for r in &rep.rows {
                println!(
                    "depth {}: midpoint {} <= deltaF {} <= trapezoid {} (gap {})",
                    r.depth, r.midpoint_sum, r.delta_f, r.trapezoid_sum, r.gap
                );
            }
            println!("limit = {}", rep.limit);
            println!("converged = {}", rep.converged);
        }
    }
    Ok(if rep.converged { 0 } else { 1 })
}

fn run_hh_check(c: HhCheckCmd) -> Result<u8> {
    let f = resolve_function(&c.function.function)?;
    let (a, b) = parse_interval(&c.interval)?;
    let field = KField::from_str(&c.field.field)?;
    let (prim, prim_text) = resolve_primitive(&f, c.primitive.primitive.as_deref())?;
    let rep = hh_scan(
        &f,
        &Primitive::Symbolic(prim),
        &a,
        &b,
        c.pairs,
        c.seed,
        c.tol,
    )?;

    let mut config = RunConfig::new("hh-check", &c.function.function, field, c.out);
    config.primitive = Some(prim_text);
    config.interval = Some([a.to_string(), b.to_string()]);
    config.pairs = Some(c.pairs);
    config.seed = Some(c.seed);
    config.tol = Some(c.tol);
    match c.out {
        OutFormat::Json => emit_json(&config, &rep)?,
        OutFormat::Csv => return Err(csv_unsupported("hh-check")),
        OutFormat::Plain => {
            print_config_comment(&config)?;
            println!("pairs_tested = {}", rep.pairs_tested);
            println!("violations = {}", rep.violations);
            if let Some(w) = &rep.first_violation {
                println!(
                    "first violation at ({}, {}): midpoint {} | quotient {} | average {}",
                    w.x, w.y, w.midpoint_value, w.difference_quotient, w.endpoint_average
                );
            }
        }
    }
    Ok(if rep.violations == 0 { 0 } else { 1 })
}

fn run_convexity(c: ConvexityCmd) -> Result<u8> {
    let f = resolve_function(&c.function.function)?;
    let (a, b) = parse_interval(&c.interval)?;
    let field = KField::from_str(&c.field.field)?;
    let rep: ConvexityReport = match c.mode {
        ConvexityMode::Jensen => jensen_check(&f, &a, &b, c.pairs, c.seed, c.tol)?,
        ConvexityMode::KConvex => k_convex_check(&f, &a, &b, c.pairs, c.max_den, c.seed, c.tol)?,
        ConvexityMode::Grid => {
            let p = parse_partition(&c.partition, a.clone(), b.clone(), field, c.seed)?;
            second_difference_check(&f, &p, c.tol)?
        }
    };

    let mut config = RunConfig::new("convexity", &c.function.function, field, c.out);
    config.interval = Some([a.to_string(), b.to_string()]);
    config.mode = Some(c.mode.name());
    config.tol = Some(c.tol);
    config.seed = Some(c.seed);
    match c.mode {
        ConvexityMode::Jensen => config.pairs = Some(c.pairs),
        ConvexityMode::KConvex => {
            config.pairs = Some(c.pairs);
            config.max_den = Some(c.max_den);
        }
        ConvexityMode::Grid => config.partition = Some(c.partition.clone()),
    }
    match c.out {
        OutFormat::Json => emit_json(&config, &rep)?,
        OutFormat::Csv => return Err(csv_unsupported("convexity")),
        OutFormat::Plain => {
            print_config_comment(&config)?;
            println!("verdict = {:?}", rep.verdict);
            println!("pairs_tested = {}", rep.pairs_tested);
            if let Some(w) = &rep.witness {
                println!(
                    "witness: f({} * {} + {} * {}) = {} > {}",
                    w.lambda,
                    w.x,
                    one_minus(&w.lambda),
                    w.y,
                    w.lhs,
                    w.rhs
                );
            }
        }
    }
    Ok(match rep.verdict {
        Verdict::NoViolationFound => 0,
        Verdict::Counterexample => 1,
    })
}

#[derive(Serialize)]
struct ViolationReport {
    found: bool,
    witness: Option<ViolationWitness>,
    budget: u64,
    seed: u64,
    tol: f64,
}

fn run_violation(c: ViolationCmd) -> Result<u8> {
    let f = resolve_function(&c.function.function)?;
    let (a, b) = parse_interval(&c.interval)?;
    let field = KField::from_str(&c.field.field)?;
    let (prim, prim_text) = resolve_primitive(&f, c.primitive.primitive.as_deref())?;
    let witness = find_violation(&f, &prim, &a, &b, c.pairs, c.seed, c.tol)?;
    let rep = ViolationReport {
        found: witness.is_some(),
        witness,
        budget: c.pairs,
        seed: c.seed,
        tol: c.tol,
    };

    let mut config = RunConfig::new("violation", &c.function.function, field, c.out);
    config.primitive = Some(prim_text);
    config.interval = Some([a.to_string(), b.to_string()]);
    config.pairs = Some(c.pairs);
    config.seed = Some(c.seed);
    config.tol = Some(c.tol);
    match c.out {
        OutFormat::Json => emit_json(&config, &rep)?,
        OutFormat::Csv => return Err(csv_unsupported("violation")),
        OutFormat::Plain => {
            print_config_comment(&config)?;
            match &rep.witness {
                Some(w) => println!(
                    "violation at ({}, {}) on the {:?} side: {} > {}",
                    w.x, w.y, w.side, w.lhs, w.rhs
                ),
                None => println!("no violation within budget {}", rep.budget),
            }
        }
    }
    Ok(if rep.found { 1 } else { 0 })
}

fn run_support_line(c: SupportLineCmd) -> Result<u8> {
    let f = resolve_function(&c.function.function)?;
    let z = parse_rational(&c.at)?;
    let field = KField::from_str(&c.field.field)?;
    let line = support_line(&f, &z, c.h0, c.tol)?;

    let mut config = RunConfig::new("support-line", &c.function.function, field, c.out);
    config.point = Some(z.to_string());
    config.tol = Some(c.tol);
    match c.out {
        OutFormat::Json => emit_json(&config, &line)?,
        OutFormat::Csv => return Err(csv_unsupported("support-line")),
        OutFormat::Plain => {
            print_config_comment(&config)?;
            println!("g(x) = {} * x + {}", line.slope, line.intercept);
            println!("touches at z = {}", line.z);
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct ReconstructReport {
    base: Rational,
    tol: f64,
    points: Vec<ReconstructedPoint>,
}

fn run_reconstruct(c: ReconstructCmd) -> Result<u8> {
    let f = resolve_function(&c.function.function)?;
    let base = parse_rational(&c.base)?;
    let field = KField::from_str(&c.field.field)?;
    let xs: Vec<Rational> = c
        .points
        .split(',')
        .map(parse_rational)
        .collect::<Result<_>>()?;
    if xs.is_empty() {
        return Err(Error::InvalidArgument("no points to tabulate".into()));
    }
    let points = reconstruct_primitive(&f, &base, &xs, c.tol)?;
    let all_converged = points.iter().all(|p| p.converged);
    let rep = ReconstructReport {
        base: base.clone(),
        tol: c.tol,
        points,
    };

    let mut config = RunConfig::new("reconstruct", &c.function.function, field, c.out);
    config.point = Some(base.to_string());
    config.points = Some(xs.iter().map(|x| x.to_string()).collect());
    config.tol = Some(c.tol);
    match c.out {
        OutFormat::Json => emit_json(&config, &rep)?,
        OutFormat::Csv => {
            print_config_comment(&config)?;
            println!("x,value,converged");
            for p in &rep.points {
                println!("{},{},{}", p.x, p.value, p.converged);
            }
        }
        OutFormat::Plain => {
            print_config_comment(&config)?;
            for p in &rep.points {
                println!("F({}) = {} (converged: {})", p.x, p.value, p.converged);
            }
        }
    }
    Ok(if all_converged { 0 } else { 1 })
}

/// Builtin name first, then the expression grammar. Parsed expressions get
/// an advisory affine shape when the tree is structurally affine and
/// `unknown` otherwise; nothing downstream trusts the label without checking.
fn resolve_function(text: &str) -> Result<FuncDef> {
    if let Some(f) = lookup_builtin(text) {
        return Ok(f);
    }
    let body = parse(text)?;
    let declared_shape = if as_affine(&body).is_some() {
        Shape::Affine
    } else {
        Shape::Unknown
    };
    Ok(FuncDef {
        name: text.to_string(),
        body,
        antiderivative: None,
        declared_shape,
        domain: Domain::full(),
    })
}

/// The -F text when given, else the builtin's recorded antiderivative.
/// Returns the definition together with the text echoed into the config.
fn resolve_primitive(f: &FuncDef, text: Option<&str>) -> Result<(FuncDef, String)> {
    match text {
        Some(t) => Ok((resolve_function(t)?, t.to_string())),
        None => match &f.antiderivative {
            Some(anti) => {
                let shown = anti.to_string();
                Ok((
                    FuncDef {
                        name: format!("{}_primitive", f.name),
                        body: anti.clone(),
                        antiderivative: None,
                        declared_shape: Shape::Unknown,
                        domain: f.domain.clone(),
                    },
                    shown,
                ))
            }
            None => Err(Error::InvalidArgument(format!(
                "'{}' has no recorded antiderivative; pass one with -F",
                f.name
            ))),
        },
    }
}

fn parse_rational(text: impl AsRef<str>) -> Result<Rational> {
    Rational::from_str(text.as_ref())
}

fn parse_interval(arg: &IntervalArg) -> Result<(Rational, Rational)> {
    let a = parse_rational(&arg.interval[0])?;
    let b = parse_rational(&arg.interval[1])?;
    Ok((a, b))
}

fn resolve_strategy(text: Option<&str>, f: &FuncDef) -> Result<BoundStrategy> {
    let Some(text) = text else {
        return Ok(match f.declared_shape {
            Shape::Unknown => BoundStrategy::DenseSample(5),
            _ => BoundStrategy::EndpointConvex,
        });
    };
    match text {
        "endpoint" => Ok(BoundStrategy::EndpointConvex),
        "oracle" => registry_oracle(f)
            .map(BoundStrategy::UserOracle)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "no cell oracle is registered for '{}'; the oracle strategy needs a builtin",
                    f.name
                ))
            }),
        _ => match text.strip_prefix("dense:") {
            Some(n) => {
                let count: u32 = n.parse().map_err(|_| {
                    Error::InvalidArgument(format!("bad probe count in strategy '{text}'"))
                })?;
                Ok(BoundStrategy::DenseSample(count))
            }
            None => Err(Error::InvalidArgument(format!(
                "unknown strategy '{text}', expected endpoint, dense:N, or oracle"
            ))),
        },
    }
}

fn parse_partition(
    spec: &str,
    a: Rational,
    b: Rational,
    field: KField,
    seed: u64,
) -> Result<KPartition> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let count = |what: &str| -> Result<u32> {
        rest.parse()
            .map_err(|_| Error::InvalidArgument(format!("bad {what} in partition '{spec}'")))
    };
    let p = match kind {
        "uniform" => KPartition::uniform(a, b, count("cell count")?)?,
        "dyadic" => KPartition::dyadic(a, b, count("depth")?)?,
        "farey" => KPartition::farey(a, b, count("order")?)?,
        "random" => {
            let (n, max_den) = rest.split_once(',').ok_or_else(|| {
                Error::InvalidArgument(format!("random partition needs N,MAXDEN, got '{spec}'"))
            })?;
            let n: u32 = n
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad cell count in '{spec}'")))?;
            let max_den: u32 = max_den.parse().map_err(|_| {
                Error::InvalidArgument(format!("bad denominator bound in '{spec}'"))
            })?;
            KPartition::random_rational(a, b, n, max_den, seed)?
        }
        _ => {
            let forms = "uniform:N, dyadic:D, farey:N, or random:N,MAXDEN";
            return Err(Error::InvalidArgument(format!(
                "unknown partition '{spec}', expected {forms}"
            )));
        }
    };
    if p.field() == field {
        Ok(p)
    } else {
        KPartition::new(
            p.a().clone(),
            p.b().clone(),
            p.coefficients().to_vec(),
            field,
        )
    }
}

/// Exact cell oracles for the builtin registry: each builtin is monotone
/// away from at most one interior turning point with a known exact value,
/// so per-cell bounds come from endpoint evaluations plus that value.
fn registry_oracle(f: &FuncDef) -> Option<Arc<dyn CellOracle>> {
    match f.name.as_str() {
        "square" | "quartic" | "abs" => Some(Arc::new(TurnOracle {
            at: 0.0,
            value: Num::zero(),
            maximum: false,
        })),
        "neg_square" => Some(Arc::new(TurnOracle {
            at: 0.0,
            value: Num::zero(),
            maximum: true,
        })),
        "relu" | "exp" | "affine" => Some(Arc::new(MonotoneOracle)),
        "sine" => Some(Arc::new(SineOracle)),
        _ => None,
    }
}

struct MonotoneOracle;

impl CellOracle for MonotoneOracle {
    fn bounds(&self, f: &FuncDef, lo: &Rational, hi: &Rational) -> Result<(Num, Num)> {
        let v_lo = f.eval_at(lo)?;
        let v_hi = f.eval_at(hi)?;
        Ok((v_lo.clone().min(v_hi.clone()), v_lo.max(v_hi)))
    }
}

/// Monotone on both sides of one turning point with a known exact value.
struct TurnOracle {
    at: f64,
    value: Num,
    maximum: bool,
}

impl CellOracle for TurnOracle {
    fn bounds(&self, f: &FuncDef, lo: &Rational, hi: &Rational) -> Result<(Num, Num)> {
        let v_lo = f.eval_at(lo)?;
        let v_hi = f.eval_at(hi)?;
        let emin = v_lo.clone().min(v_hi.clone());
        let emax = v_lo.max(v_hi);
        let inside = lo.to_f64()? < self.at && self.at < hi.to_f64()?;
        Ok(match (inside, self.maximum) {
            (false, _) => (emin, emax),
            (true, false) => (self.value.clone().min(emin), emax),
            (true, true) => (emin, self.value.clone().max(emax)),
        })
    }
}

/// Crests at pi/2 + 2k*pi, troughs at -pi/2 + 2k*pi; between consecutive
/// turning points the function is monotone.
struct SineOracle;

fn contains_turn(lo: f64, hi: f64, phase: f64) -> bool {
    let tau = std::f64::consts::TAU;
    let k = ((lo - phase) / tau).ceil();
    let turn = phase + k * tau;
    lo < turn && turn < hi
}

impl CellOracle for SineOracle {
    fn bounds(&self, f: &FuncDef, lo: &Rational, hi: &Rational) -> Result<(Num, Num)> {
        let v_lo = f.eval_at(lo)?;
        let v_hi = f.eval_at(hi)?;
        let emin = v_lo.clone().min(v_hi.clone());
        let emax = v_lo.max(v_hi);
        let (lf, hf) = (lo.to_f64()?, hi.to_f64()?);
        let sup = if contains_turn(lf, hf, std::f64::consts::FRAC_PI_2) {
            Num::Exact(Rational::one())
        } else {
            emax
        };
        let inf = if contains_turn(lf, hf, -std::f64::consts::FRAC_PI_2) {
            Num::Exact(-&Rational::one())
        } else {
            emin
        };
        Ok((inf, sup))
    }
}

fn one_minus(lambda: &Rational) -> Rational {
    &Rational::one() - lambda
}

fn csv_unsupported(command: &str) -> Error {
    Error::InvalidArgument(format!(
        "csv output applies to trace-producing subcommands; '{command}' emits json or plain"
    ))
}

fn emit_json<T: Serialize>(config: &RunConfig, report: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        config: &'a RunConfig,
        report: &'a T,
    }
    let text = serde_json::to_string_pretty(&Envelope { config, report })
        .map_err(|e| Error::InvalidArgument(format!("report serialization failed: {e}")))?;
    println!("{text}");
    Ok(())
}

/// Non-JSON outputs still carry the full configuration, as one comment line.
fn print_config_comment(config: &RunConfig) -> Result<()> {
    let text = serde_json::to_string(config)
        .map_err(|e| Error::InvalidArgument(format!("config serialization failed: {e}")))?;
    println!("# config {text}");
    Ok(())
}
