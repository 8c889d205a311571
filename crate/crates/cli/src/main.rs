//! `ssp`: solve stochastic shortest path instances and report suboptimality bounds.

mod format;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use ssp_core::bounds::{bounds_report, horizon_m_general, loose_general_bound, BoundsMethod, BoundsReport, HorizonOptions};
use ssp_core::dp::{
    bellman_residual, check_uniformly_improvable, evaluate_policy, greedy_policy, is_uniformly_improvable,
    policy_iteration, value_iteration, Algorithm, IterationTrace,
};
use ssp_core::gridworld::{
    build_gridworld, compare_table1, compare_table2, run_table1, run_table2, Mismatch, TABLE1_PI, TABLE1_VI, TABLE2,
};
use ssp_core::io::{load_problem, load_values, problem_to_json, Convention};
use ssp_core::properness::{all_policies_proper, is_proper, uniform_random_policy};
use ssp_core::simulate::{monte_carlo_steps, MonteCarloEstimate};
use ssp_core::tables::{trace_rows, TraceRow};
use ssp_core::{SspError, SspProblem, ValueFunction};

use format::{mismatch_list, opt, sig6, table2_csv, trace_csv};

const SIMULATION_CAP: usize = 1_000_000;

#[derive(Parser)]
#[command(name = "ssp", version, about = "Stochastic shortest path solvers with certified error bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run value or policy iteration and report bounds.
    Solve(SolveArgs),
    /// Reproduce the gridworld tables.
    Bench(BenchArgs),
    /// Properness analysis and, given values, the horizon certificate.
    Check(CheckArgs),
    /// Rewrite an instance file in the reward or cost convention.
    Convert(ConvertArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Vi,
    Pi,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Vi => Algorithm::ValueIteration,
            AlgorithmArg::Pi => Algorithm::PolicyIteration,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundsArg {
    Auto,
    PositiveCost,
    AllProper,
    General,
}

impl From<BoundsArg> for BoundsMethod {
    fn from(b: BoundsArg) -> Self {
        match b {
            BoundsArg::Auto => BoundsMethod::Auto,
            BoundsArg::PositiveCost => BoundsMethod::PositiveCost,
            BoundsArg::AllProper => BoundsMethod::AllProper,
            BoundsArg::General => BoundsMethod::General,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Cost,
    Reward,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Cost => Convention::Cost,
            ConventionArg::Reward => Convention::Reward,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file (JSON).
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Vi)]
    algorithm: AlgorithmArg,
    /// `uniform-random`, `zero`, or a value-function JSON file.
    #[arg(long, default_value = "uniform-random")]
    init: String,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, value_enum, default_value_t = BoundsArg::Auto)]
    bounds: BoundsArg,
    /// Seed for simulation; SSP_SEED takes precedence.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo rollouts per state under the final greedy policy (0 = none).
    #[arg(long, default_value_t = 0)]
    simulate: usize,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[command(subcommand)]
    target: BenchTarget,
}

#[derive(Subcommand)]
enum BenchTarget {
    /// Per-iteration J_under, m, residual and error.
    Table1 {
        #[arg(long, value_enum, default_value_t = AlgorithmArg::Vi)]
        algorithm: AlgorithmArg,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Per-state values and steps bounds along policy iteration.
    Table2 {
        #[command(flatten)]
        out: OutputArgs,
    },
    /// The gridworld instance file (reward convention).
    Instance {
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Value function to test for uniform improvability.
    #[arg(long)]
    values: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum)]
    to: ConventionArg,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

enum CliError {
    Core(SspError),
    Usage(String),
    Bench(Vec<Mismatch>),
}

impl From<SspError> for CliError {
    fn from(e: SspError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(SspError::Io(e))
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Bench(_) => 1,
            CliError::Core(e) => match e {
                SspError::ImproperPolicy { .. } | SspError::NotUniformlyImprovable { .. } => 3,
                SspError::HorizonCapExceeded { .. } => 4,
                SspError::MaxItersExceeded(_)
                | SspError::SingularSystem
                | SspError::InfiniteStepsBound { .. }
                | SspError::NoTerminalTransition => 1,
                _ => 2,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Bench(_) => "bench_mismatch",
            CliError::Core(e) => match e {
                SspError::Json(_) => "parse",
                SspError::Io(_) => "io",
                SspError::ImproperPolicy { .. } => "improper_policy",
                SspError::NotUniformlyImprovable { .. } => "not_uniformly_improvable",
                SspError::HorizonCapExceeded { .. } => "horizon_cap_exceeded",
                SspError::MaxItersExceeded(_) => "max_iters_exceeded",
                SspError::SingularSystem => "singular_system",
                SspError::NonpositiveCost { .. } => "nonpositive_cost",
                SspError::NotAllPoliciesProper { .. } => "not_all_policies_proper",
                SspError::InfiniteStepsBound { .. } => "infinite_steps_bound",
                SspError::NoTerminalTransition => "no_terminal_transition",
                _ => "validation",
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
            CliError::Bench(m) => format!("{} entries outside tolerance: {}", m.len(), mismatch_list(m)),
        }
    }

    fn to_json(&self) -> String {
        let mut obj = serde_json::json!({
            "error": self.kind(),
            "message": self.message(),
            "exit_code": self.code(),
        });
        if let CliError::Bench(m) = self {
            obj["mismatches"] = serde_json::to_value(m).expect("mismatches serialize");
        }
        obj.to_string()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

fn resolve_seed(flag: u64) -> CliResult<u64> {
    match std::env::var("SSP_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| CliError::Usage(format!("SSP_SEED={s:?} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

#[derive(Serialize)]
struct SolveOutput {
    algorithm: Algorithm,
    convention: Convention,
    converged: bool,
    seed: u64,
    trace: Vec<TraceRow>,
    /// Final values in the instance's convention.
    values: Vec<f64>,
    policy: Vec<usize>,
    report: BoundsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulation: Option<Vec<Option<MonteCarloEstimate>>>,
}

fn initial_values(problem: &SspProblem, init: &str, convention: Convention) -> CliResult<ValueFunction> {
    match init {
        "uniform-random" => Ok(evaluate_policy(problem, &uniform_random_policy(problem))?),
        "zero" => Ok(ValueFunction::zeros(problem.num_states())),
        path => Ok(load_values(Path::new(path), problem, convention)?),
    }
}

fn solve(a: SolveArgs) -> CliResult<()> {
    if !(a.epsilon > 0.0) {
        return Err(CliError::Usage(format!("--epsilon must be positive, got {}", a.epsilon)));
    }
    if a.max_iters == 0 {
        return Err(CliError::Usage("--max-iters must be at least 1".into()));
    }
    let seed = resolve_seed(a.seed)?;
    let (problem, convention) = load_problem(&a.input)?;
    let method = BoundsMethod::from(a.bounds);
    let start = initial_values(&problem, &a.init, convention)?;
    check_uniformly_improvable(&problem, &start)?;

    let (trace, converged): (IterationTrace, bool) = match a.algorithm {
        AlgorithmArg::Vi => match value_iteration(&problem, &start, a.epsilon, a.max_iters) {
            Ok(sol) => (sol.trace, true),
            Err(SspError::MaxItersExceeded(sol)) => (sol.trace, false),
            Err(e) => return Err(e.into()),
        },
        AlgorithmArg::Pi => {
            let result = if a.init == "uniform-random" {
                policy_iteration(&problem, &uniform_random_policy(&problem), a.max_iters)?
            } else {
                policy_iteration(&problem, &greedy_policy(&problem, &start)?, a.max_iters)?
            };
            (result.trace, result.converged)
        }
    };
    let last = trace.last().expect("solvers record the initial values").values.clone();
    let rows = trace_rows(&problem, &trace, method, convention)?;
    let report = bounds_report(&problem, &last, method)?;
    let policy = greedy_policy(&problem, &last)?;
    let simulation = if a.simulate > 0 {
        let t = problem.terminal();
        let mut sims = Vec::with_capacity(problem.num_states());
        for i in 0..problem.num_states() {
            sims.push(if i == t {
                None
            } else {
                Some(monte_carlo_steps(&problem, &policy, i, a.simulate, seed, SIMULATION_CAP)?)
            });
        }
        Some(sims)
    } else {
        None
    };
    let out = SolveOutput {
        algorithm: a.algorithm.into(),
        convention,
        converged,
        seed,
        trace: rows,
        values: convention.present(&last).into_inner(),
        policy: policy.actions().to_vec(),
        report,
        simulation,
    };
    let text = match a.out.format {
        Format::Json => to_json(&out),
        Format::Csv => solve_csv(&out),
    };
    emit(a.out.output.as_deref(), &text)
}

/// Serialized name of a unit enum variant.
fn name<T: Serialize>(x: &T) -> String {
    serde_json::to_value(x).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn solve_csv(out: &SolveOutput) -> String {
    let mut s = trace_csv(&out.trace);
    s.push_str("\nstate,J,action,N,bound");
    if out.simulation.is_some() {
        s.push_str(",mc_mean,mc_ci95");
    }
    s.push('\n');
    for (i, v) in out.values.iter().enumerate() {
        s.push_str(&format!(
            "{i},{},{},{},{}",
            sig6(*v),
            out.policy[i],
            sig6(out.report.steps_bound[i]),
            sig6(out.report.per_state_bound[i])
        ));
        if let Some(sims) = &out.simulation {
            let (m, c) = sims[i].as_ref().map_or((None, None), |e| (Some(e.mean), Some(e.ci95)));
            s.push_str(&format!(",{},{}", opt(m), opt(c)));
        }
        s.push('\n');
    }
    let r = &out.report;
    let overrides: Vec<String> = r.overrides.iter().map(|i| i.to_string()).collect();
    s.push_str("\nkey,value\n");
    for (k, v) in [
        ("algorithm", name(&out.algorithm)),
        ("convention", name(&out.convention)),
        ("converged", out.converged.to_string()),
        ("iterations", (out.trace.len().saturating_sub(1)).to_string()),
        ("method", name(&r.method)),
        ("residual", sig6(r.residual)),
        ("c_under", sig6(r.c_under)),
        ("c_bar", sig6(r.c_bar)),
        ("max_steps", sig6(r.max_steps)),
        ("global_bound", sig6(r.global_bound)),
        ("overrides", overrides.join(" ")),
        ("vacuous", r.vacuous.to_string()),
        ("seed", out.seed.to_string()),
    ] {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

#[derive(Serialize)]
struct TableOutput<T: Serialize> {
    rows: Vec<T>,
    mismatches: Vec<Mismatch>,
    pass: bool,
}

fn finish_bench<T: Serialize>(rows: Vec<T>, mismatches: Vec<Mismatch>, out: &OutputArgs, csv: String, what: &str) -> CliResult<()> {
    let text = match out.format {
        Format::Csv => csv,
        Format::Json => to_json(&TableOutput { pass: mismatches.is_empty(), rows, mismatches: mismatches.clone() }),
    };
    emit(out.output.as_deref(), &text)?;
    if mismatches.is_empty() {
        eprintln!("PASS {what}");
        Ok(())
    } else {
        Err(CliError::Bench(mismatches))
    }
}

fn bench(a: BenchArgs) -> CliResult<()> {
    let grid = build_gridworld();
    match a.target {
        BenchTarget::Table1 { algorithm, out } => {
            let (iters, expected) = match algorithm {
                AlgorithmArg::Vi => (12, &TABLE1_VI[..]),
                AlgorithmArg::Pi => (100, &TABLE1_PI[..]),
            };
            let rows = run_table1(&grid, algorithm.into(), iters)?;
            let bad = compare_table1(&rows, expected);
            let csv = trace_csv(&rows);
            let what = format!("{} rows compared", expected.len());
            finish_bench(rows, bad, &out, csv, &what)
        }
        BenchTarget::Table2 { out } => {
            let rows = run_table2(&grid)?;
            let bad = compare_table2(&rows, &TABLE2);
            let csv = table2_csv(&rows);
            finish_bench(rows, bad, &out, csv, "5 rows x 11 states compared")
        }
        BenchTarget::Instance { output } => emit(output.as_deref(), &problem_to_json(&grid, Convention::Reward)),
    }
}

#[derive(Serialize)]
struct CheckOutput {
    all_policies_proper: bool,
    witness_states: Vec<usize>,
    witness_actions: Vec<usize>,
    uniform_random_proper: bool,
    uniform_random_m: Option<usize>,
    uniform_random_rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<ValuesCheck>,
}

#[derive(Serialize)]
struct ValuesCheck {
    uniformly_improvable: bool,
    residual: f64,
    horizon_m: Option<usize>,
    loose_steps_bound: Option<f64>,
}

fn check(a: CheckArgs) -> CliResult<()> {
    let (problem, convention) = load_problem(&a.input)?;
    let all = all_policies_proper(&problem);
    let uniform = is_proper(&problem, &uniform_random_policy(&problem));
    let values = match &a.values {
        None => None,
        Some(path) => {
            let j = load_values(path, &problem, convention)?;
            let improvable = is_uniformly_improvable(&problem, &j)?;
            let residual = bellman_residual(&problem, &j)?.residual;
            let (horizon_m, loose_steps_bound) = if improvable {
                let cert = horizon_m_general(&problem, &j, HorizonOptions::default())?;
                let loose = loose_general_bound(&problem, &cert)?;
                let n = problem.nonterminal_states().map(|i| loose.steps[i]).fold(0.0, f64::max);
                (Some(cert.m), Some(n))
            } else {
                (None, None)
            };
            Some(ValuesCheck { uniformly_improvable: improvable, residual, horizon_m, loose_steps_bound })
        }
    };
    let out = CheckOutput {
        all_policies_proper: all.all_proper,
        witness_states: all.witness_states,
        witness_actions: all.witness_actions,
        uniform_random_proper: uniform.proper,
        uniform_random_m: uniform.m_stages,
        uniform_random_rho: uniform.rho_m,
        values,
    };
    let text = match a.format {
        Format::Json => to_json(&out),
        Format::Csv => check_csv(&out),
    };
    emit(None, &text)
}

fn check_csv(out: &CheckOutput) -> String {
    let join = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
    let mut lines = vec![
        ("all_policies_proper".to_string(), out.all_policies_proper.to_string()),
        ("witness_states".into(), join(&out.witness_states)),
        ("witness_actions".into(), join(&out.witness_actions)),
        ("uniform_random_proper".into(), out.uniform_random_proper.to_string()),
        ("uniform_random_m".into(), out.uniform_random_m.map(|m| m.to_string()).unwrap_or_default()),
        ("uniform_random_rho".into(), opt(out.uniform_random_rho)),
    ];
    if let Some(v) = &out.values {
        lines.push(("uniformly_improvable".into(), v.uniformly_improvable.to_string()));
        lines.push(("residual".into(), sig6(v.residual)));
        lines.push(("horizon_m".into(), v.horizon_m.map(|m| m.to_string()).unwrap_or_default()));
        lines.push(("loose_steps_bound".into(), opt(v.loose_steps_bound)));
    }
    let mut s = String::from("key,value\n");
    for (k, v) in lines {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

fn convert(a: ConvertArgs) -> CliResult<()> {
    let (problem, _) = load_problem(&a.input)?;
    emit(a.output.as_deref(), &problem_to_json(&problem, a.to.into()))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Check(a) => check(a),
        Command::Convert(a) => convert(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().lines().next().unwrap_or("invalid arguments").to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code())
        }
    }
}
