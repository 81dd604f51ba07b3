//! Command-line front end: parse a problem JSON file, dispatch to the solver
//! library, and write JSON results plus CSV plot data.
//!
//! Exit codes: 0 success, 2 infeasible problem, 3 schema/input error,
//! 4 numerical failure.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use infodesign::solver::Constraint;
use infodesign::{
    approximate_set, concavify, critical_belief, ri_solve, screening_solve,
    solve_convex_constrained, solve_generic, solve_smooth, solve_with_slack, value_iterate,
    value_profile, Belief, CostFn, DynamicSpec, Error as LibError, ObjectiveSpec, ProblemSpec,
    ScreenSpec, SignalStructure, ValueFunction, VoterSpec,
};
use serde::Deserialize;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_SCHEMA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "infodesign",
    version,
    about = "Finite-state information design: concave envelopes, possibility sets, \
             constrained solvers, dynamic acquisition"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Problem JSON file.
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// Result JSON file; CSV (when emitted) lands next to it with a .csv extension.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Override the simplex grid resolution from the input file.
    #[arg(long = "grid-d", global = true)]
    grid_d: Option<u32>,

    /// Override the number of support directions.
    #[arg(long, global = true)]
    directions: Option<usize>,

    /// Override the convergence tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Random seed recorded in the output; all solvers are deterministic
    /// given the same seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Concave envelope of a value function at a prior.
    Cav,
    /// Sandwich approximation of the possibility set.
    Set,
    /// Optimal signal structure for a (possibly constrained) objective.
    Solve,
    /// Value iteration for the dynamic acquisition problem.
    Bellman,
    /// Rational-inattention fixed point at a single prior.
    Ri,
    /// Referendum persuasion with costly participation.
    Voters,
    /// Incentive-compatible menu of information structures.
    Screen,
    /// Optimal value across a list of priors.
    Profile,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::Cav => "cav",
            Cmd::Set => "set",
            Cmd::Solve => "solve",
            Cmd::Bellman => "bellman",
            Cmd::Ri => "ri",
            Cmd::Voters => "voters",
            Cmd::Screen => "screen",
            Cmd::Profile => "profile",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq)]
enum Format {
    Json,
    Csv,
    Both,
}

// ---------------------------------------------------------------------------
// Input schemas (spec_version 1, unknown fields rejected)
// ---------------------------------------------------------------------------

fn default_d() -> u32 {
    16
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CavInput {
    #[allow(dead_code)] // validated against the raw document before parsing
    spec_version: u32,
    prior: Vec<f64>,
    value_function: ValueFunction,
    #[serde(default = "default_d")]
    d: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetInput {
    #[allow(dead_code)] // validated against the raw document before parsing
    spec_version: u32,
    prior: Vec<f64>,
    value_functions: Vec<ValueFunction>,
    directions: Option<usize>,
    #[serde(default = "default_d")]
    d: u32,
}

#[derive(Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum ConstraintSpec {
    #[default]
    None,
    NonnegTail {
        m: usize,
    },
    Sublevel {
        g: ObjectiveSpec,
    },
}

#[derive(Deserialize, Default, Clone, Copy, PartialEq)]
#[serde(rename_all = "kebab-case")]
enum MethodSpec {
    #[default]
    Generic,
    Smooth,
    Slack,
    ConvexDual,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveInput {
    #[allow(dead_code)] // validated against the raw document before parsing
    spec_version: u32,
    prior: Vec<f64>,
    value_functions: Vec<ValueFunction>,
    objective: ObjectiveSpec,
    #[serde(default)]
    constraint: ConstraintSpec,
    #[serde(default)]
    method: MethodSpec,
    directions: Option<usize>,
    #[serde(default = "default_d")]
    d: u32,
    #[serde(default = "default_solve_iters")]
    max_iters: usize,
}

fn default_solve_iters() -> usize {
    500
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BellmanInput {
    #[allow(dead_code)] // validated against the raw document before parsing
    spec_version: u32,
    problem: DynamicSpec,
    #[serde(default = "default_bellman_tol")]
    tol: f64,
    #[serde(default = "default_solve_iters")]
    max_iters: usize,
}

fn default_bellman_tol() -> f64 {
    1e-6
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RiInput {
    #[allow(dead_code)] // validated against the raw document before parsing
    spec_version: u32,
    prior: Vec<f64>,
    stopping: ValueFunction,
    cost: CostFn,
    #[serde(default = "default_ri_d")]
    d: u32,
    #[serde(default = "default_ri_iters")]
    max_iters: usize,
}

fn default_ri_d() -> u32 {
    40
}

fn default_ri_iters() -> usize {
    200
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VotersInput {
    #[allow(dead_code)] // validated against the raw document before parsing
    spec_version: u32,
    problem: VoterSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScreenInput {
    #[allow(dead_code)] // validated against the raw document before parsing
    spec_version: u32,
    problem: ScreenSpec,
    #[serde(default = "default_screen_d")]
    d: u32,
    atoms_cap: Option<usize>,
}

fn default_screen_d() -> u32 {
    12
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileInput {
    #[allow(dead_code)] // validated against the raw document before parsing
    spec_version: u32,
    priors: Vec<Vec<f64>>,
    value_functions: Vec<ValueFunction>,
    objective: ObjectiveSpec,
    #[serde(default)]
    constraint: ConstraintSpec,
    directions: Option<usize>,
    #[serde(default = "default_d")]
    d: u32,
}

// ---------------------------------------------------------------------------
// Error plumbing
// ---------------------------------------------------------------------------

struct RunError {
    code: u8,
    message: String,
}

impl RunError {
    fn schema(message: impl Into<String>) -> Self {
        RunError { code: EXIT_SCHEMA, message: message.into() }
    }
}

impl From<LibError> for RunError {
    fn from(e: LibError) -> Self {
        let code = match e {
            LibError::InfeasibleProblem(_)
            | LibError::InfeasiblePrior(_)
            | LibError::NotInSet(_)
            | LibError::Indeterminate { .. }
            | LibError::NoRoot { .. }
            | LibError::Unpersuadable { .. } => EXIT_INFEASIBLE,
            LibError::InvalidBelief(_)
            | LibError::InvalidStructure(_)
            | LibError::InvalidValueFunction(_)
            | LibError::InvalidSpec(_) => EXIT_SCHEMA,
            LibError::MaxIterations { .. }
            | LibError::NonConvergence(_)
            | LibError::NumericalRankFailure { .. } => EXIT_NUMERICAL,
        };
        RunError { code, message: e.to_string() }
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprintln!("{e}");
                    ExitCode::from(EXIT_SCHEMA)
                }
            }
        }
    };
    init_threads();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("infodesign {}: {}", cli.command.name(), e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Caps the worker pool when INFODESIGN_THREADS is set.
fn init_threads() {
    if let Some(n) = std::env::var("INFODESIGN_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn read_input<T: serde::de::DeserializeOwned>(cli: &Cli) -> RunResult<(T, PathBuf)> {
    let path = cli
        .input
        .as_ref()
        .ok_or_else(|| RunError::schema("--input is required"))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::schema(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| RunError::schema(format!("{}: {e}", path.display())))?;
    let version = value.get("spec_version").and_then(|v| v.as_u64());
    if version != Some(1) {
        return Err(RunError::schema(format!(
            "{}: spec_version must be 1, got {:?}",
            path.display(),
            version
        )));
    }
    let parsed: T = serde_json::from_value(value)
        .map_err(|e| RunError::schema(format!("{}: {e}", path.display())))?;
    let output = cli
        .output
        .clone()
        .ok_or_else(|| RunError::schema("--output is required"))?;
    Ok((parsed, output))
}

fn belief(probs: &[f64]) -> RunResult<Belief> {
    Ok(Belief::new(probs.to_vec())?)
}

fn write_outputs(
    cli: &Cli,
    output: &Path,
    result: serde_json::Value,
    csv: Option<String>,
) -> RunResult<()> {
    let envelope = json!({
        "spec_version": 1,
        "command": cli.command.name(),
        "seed": cli.seed,
        "result": result,
    });
    let io_err =
        |e: std::io::Error| RunError::schema(format!("cannot write {}: {e}", output.display()));
    if cli.format != Format::Csv {
        let mut text = serde_json::to_string_pretty(&envelope)
            .map_err(|e| RunError::schema(e.to_string()))?;
        text.push('\n');
        std::fs::write(output, text).map_err(io_err)?;
    }
    if cli.format != Format::Json {
        if let Some(csv) = csv {
            let path = output.with_extension("csv");
            std::fs::write(&path, csv)
                .map_err(|e| RunError::schema(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    Ok(())
}

/// CSV rows of a signal structure: weight then posterior coordinates.
fn structure_csv(s: &SignalStructure) -> String {
    let dim = s.dim();
    let mut out = String::from("weight");
    for i in 0..dim {
        out.push_str(&format!(",p{}", i + 1));
    }
    out.push('\n');
    for (w, b) in s.atoms() {
        out.push_str(&format!("{w:.12}"));
        for x in b.probs() {
            out.push_str(&format!(",{x:.12}"));
        }
        out.push('\n');
    }
    out
}

fn run(cli: &Cli) -> RunResult<()> {
    match cli.command {
        Cmd::Cav => {
            let (input, output): (CavInput, _) = read_input(cli)?;
            let mu = belief(&input.prior)?;
            input.value_function.validate(mu.dim())?;
            let d = cli.grid_d.unwrap_or(input.d);
            let cav = concavify(&input.value_function, &mu, d)?;
            let csv = structure_csv(&cav.structure);
            write_outputs(cli, &output, serde_json::to_value(&cav).unwrap(), Some(csv))
        }
        Cmd::Set => {
            let (input, output): (SetInput, _) = read_input(cli)?;
            let mu = belief(&input.prior)?;
            for v in &input.value_functions {
                v.validate(mu.dim())?;
            }
            let n = input.value_functions.len();
            let count = cli
                .directions
                .or(input.directions)
                .unwrap_or_else(|| infodesign::posset::default_directions(n));
            let d = cli.grid_d.unwrap_or(input.d);
            let approx = approximate_set(&mu, &input.value_functions, count, d)?;
            let gap = approx.sandwich_gap(2 * count)?;
            let csv = approx.csv();
            let mut result = serde_json::to_value(&approx).unwrap();
            result["sandwich_gap"] = json!(gap);
            write_outputs(cli, &output, result, Some(csv))
        }
        Cmd::Solve => {
            let (input, output): (SolveInput, _) = read_input(cli)?;
            let d = cli.grid_d.unwrap_or(input.d);
            let mu = belief(&input.prior)?;
            let n = input.value_functions.len();
            let directions = cli.directions.or(input.directions).unwrap_or(0);
            let objective = Box::new(input.objective.compile(n)?);
            let constraint = match input.constraint {
                ConstraintSpec::None => Constraint::None,
                ConstraintSpec::NonnegTail { m } => Constraint::NonnegTail { m },
                ConstraintSpec::Sublevel { g } => {
                    Constraint::Sublevel { g: Box::new(g.compile(n)?) }
                }
            };
            let spec = ProblemSpec::new(mu, input.value_functions, objective)?
                .with_constraint(constraint);
            let sol = match input.method {
                MethodSpec::Generic => solve_generic(&spec, directions, d)?,
                MethodSpec::Smooth => solve_smooth(&spec, input.max_iters, d)?,
                MethodSpec::Slack => solve_with_slack(&spec, directions, d)?,
                MethodSpec::ConvexDual => solve_convex_constrained(&spec, d)?,
            };
            write_outputs(cli, &output, serde_json::to_value(&sol).unwrap(), None)
        }
        Cmd::Bellman => {
            let (input, output): (BellmanInput, _) = read_input(cli)?;
            let mut problem = input.problem;
            if let Some(d) = cli.grid_d {
                problem.grid_d = d;
            }
            // revalidate after overrides via the checked constructor
            let problem = DynamicSpec::new(
                problem.stopping,
                problem.cost,
                problem.discount,
                problem.capacity,
                problem.dim,
                problem.grid_d,
            )?;
            let tol = cli.tol.unwrap_or(input.tol);
            let iter = value_iterate(&problem, tol, input.max_iters)?;
            let result = json!({
                "dim": problem.dim,
                "grid_d": problem.grid_d,
                "iterations": iter.iterations,
                "final_step_norm": iter.step_norms.last().copied().unwrap_or(0.0),
                "values": iter.table.values(),
            });
            write_outputs(cli, &output, result, Some(iter.table.csv()))
        }
        Cmd::Ri => {
            let (input, output): (RiInput, _) = read_input(cli)?;
            let mu = belief(&input.prior)?;
            let d = cli.grid_d.unwrap_or(input.d);
            let sol = ri_solve(&input.stopping, &input.cost, &mu, d, input.max_iters)?;
            write_outputs(cli, &output, serde_json::to_value(&sol).unwrap(), None)
        }
        Cmd::Voters => {
            let (input, output): (VotersInput, _) = read_input(cli)?;
            let outcome = voters_report(&input.problem)?;
            write_outputs(cli, &output, outcome, None)
        }
        Cmd::Screen => {
            let (input, output): (ScreenInput, _) = read_input(cli)?;
            let d = cli.grid_d.unwrap_or(input.d);
            let menu = screening_solve(&input.problem, d, input.atoms_cap)?;
            write_outputs(cli, &output, serde_json::to_value(&menu).unwrap(), None)
        }
        Cmd::Profile => {
            let (input, output): (ProfileInput, _) = read_input(cli)?;
            let d = cli.grid_d.unwrap_or(input.d);
            let directions = cli.directions.or(input.directions).unwrap_or(0);
            let n = input.value_functions.len();
            let mu0 = belief(
                input
                    .priors
                    .first()
                    .ok_or_else(|| RunError::schema("profile needs at least one prior"))?,
            )?;
            let priors = input
                .priors
                .iter()
                .map(|p| belief(p))
                .collect::<RunResult<Vec<_>>>()?;
            let objective = Box::new(input.objective.compile(n)?);
            let constraint = match input.constraint {
                ConstraintSpec::None => Constraint::None,
                ConstraintSpec::NonnegTail { m } => Constraint::NonnegTail { m },
                ConstraintSpec::Sublevel { g } => {
                    Constraint::Sublevel { g: Box::new(g.compile(n)?) }
                }
            };
            let spec = ProblemSpec::new(mu0, input.value_functions, objective)?
                .with_constraint(constraint);
            let points = value_profile(&spec, &priors, directions, d);
            let mut csv = String::new();
            let dim = priors[0].dim();
            for i in 0..dim {
                csv.push_str(&format!("p{},", i + 1));
            }
            csv.push_str("value,error\n");
            for pt in &points {
                for x in pt.mu.probs() {
                    csv.push_str(&format!("{x:.12},"));
                }
                match (&pt.value, &pt.error) {
                    (Some(v), _) => csv.push_str(&format!("{v:.12},\n")),
                    (None, Some(e)) => csv.push_str(&format!(",{}\n", e.replace(',', ";"))),
                    (None, None) => csv.push_str(",\n"),
                }
            }
            write_outputs(cli, &output, serde_json::to_value(&points).unwrap(), Some(csv))
        }
    }
}

/// Voter outcome plus the per-voter critical beliefs for context.
fn voters_report(spec: &VoterSpec) -> RunResult<serde_json::Value> {
    let outcome = infodesign::voters_solve(spec)?;
    let critical: Vec<serde_json::Value> = (0..spec.voters.len())
        .map(|i| match critical_belief(spec, i) {
            Ok(x) => json!(x),
            Err(_) => serde_json::Value::Null,
        })
        .collect();
    let mut value = serde_json::to_value(&outcome).unwrap();
    value["critical_beliefs"] = json!(critical);
    Ok(value)
}
