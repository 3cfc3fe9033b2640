//! The `riskmdp` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use riskmdp_core::grid::{default_uncertain, generate_grid, GridSpec, DEFAULT_LAYOUT_SEED};
use riskmdp_core::oracle::OracleResult;
use riskmdp_core::planner::{PlanError, PlanStatus};
use riskmdp_core::sim::{EvaluationReport, ReportMetadata};
use riskmdp_core::{
    brute_force_constrained_optimum, build_gridworld, plan, GridConfig, Mdp, PlanResult, PlannerConfig,
    RiskMeasure,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::{self, DEFAULT_MAX_STEPS};
use crate::io::{self, IoError};
use crate::manifest::RunManifest;
use crate::render::{render_svg, RenderError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "riskmdp", version, about = "Constrained risk-averse MDP planning on rover grid worlds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random obstacle layout.
    GenGrid(GenGridArgs),
    /// Solve the constrained planning problem.
    Plan(PlanArgs),
    /// Monte Carlo robustness test of a plan.
    Evaluate(EvaluateArgs),
    /// Draw a plan as SVG.
    Render(RenderArgs),
    /// Compare the planner's bound with brute-force enumeration.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct GenGridArgs {
    /// Grid size as WIDTHxHEIGHT.
    #[arg(long, default_value = "10x10", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 0.25)]
    pub obstacle_frac: f64,
    /// Uncertain single-cell obstacles; 3, 6 or 9 by size when omitted.
    #[arg(long)]
    pub uncertain: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_LAYOUT_SEED)]
    pub seed: u64,
    /// Objective cost of a move from a free cell.
    #[arg(long, default_value_t = 0.0)]
    pub step_cost: f64,
    #[arg(long, default_value_t = 0.95)]
    pub gamma: f64,
    #[arg(long, default_value = "grid.json")]
    pub out: PathBuf,
    /// Also write the MDP as `mdp.json`.
    #[arg(long)]
    pub mdp_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Measure {
    Expectation,
    Cvar,
    Evar,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Grid world (`grid.json`).
    #[arg(long, conflicts_with = "mdp", required_unless_present = "mdp")]
    pub grid: Option<PathBuf>,
    /// Explicit MDP (`mdp.json`).
    #[arg(long)]
    pub mdp: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    #[arg(long, value_enum, default_value = "expectation")]
    pub measure: Measure,
    #[arg(long, default_value_t = 0.15)]
    pub epsilon: f64,
    /// Constraint budgets, one per constraint cost.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub beta: Vec<f64>,
    /// Override the model's discount factor.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Start CVaR and EVaR from the default point instead of the milder
    /// measure's solution.
    #[arg(long)]
    pub cold_start: bool,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value = "plan.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    #[arg(long, default_value_t = 0.2)]
    pub perturb: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, default_value = "plan.svg")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value = "oracle.json")]
    pub out: PathBuf,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("invalid dimension {t:?} in {s:?}"))
    };
    Ok((parse(w)?, parse(h)?))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Io(_) => EXIT_USAGE,
            Self::Solver(_) => EXIT_SOLVER,
            Self::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Config(_) | PlanError::InvalidMdp(_) => Self::Usage(e.to_string()),
            _ => Self::Solver(e.to_string()),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        Self::Usage(e.to_string())
    }
}

/// `plan.json`: the planner result plus the run facts the report needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub manifest_sha256: String,
    pub solve_seconds: f64,
    pub plan: PlanResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub manifest_sha256: String,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFile {
    pub manifest_sha256: String,
    pub measure: RiskMeasure,
    pub budgets: Vec<f64>,
    pub plan_status: PlanStatus,
    pub lower_bound: Option<f64>,
    pub oracle: OracleResult,
    /// Oracle optimum minus the planner bound; `None` unless both exist.
    pub gap: Option<f64>,
    /// Expectation with one constraint: randomized optimum minus bound.
    pub randomized_gap: Option<f64>,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Messages go to `out` and `err`.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::GenGrid(a) => gen_grid(&a),
        Command::Plan(a) => cmd_plan(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Render(a) => cmd_render(&a),
        Command::Oracle(a) => cmd_oracle(&a),
    };
    match result {
        Ok(msg) => {
            let _ = write!(out, "{msg}");
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn gen_grid(a: &GenGridArgs) -> Result<String, CliError> {
    let (width, height) = a.size;
    // The default count never exceeds the number of obstacles on tiny maps.
    let obstacles = (a.obstacle_frac * (width * height) as f64).round().max(0.0) as usize;
    let spec = GridSpec {
        width,
        height,
        obstacle_fraction: a.obstacle_frac,
        uncertain: a
            .uncertain
            .unwrap_or_else(|| default_uncertain(width.max(height)).min(obstacles)),
        seed: a.seed,
    };
    let mut grid = generate_grid(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    grid.step_cost = a.step_cost;
    grid.discount = a.gamma;
    let mdp = build_gridworld(&grid).map_err(|e| CliError::Usage(e.to_string()))?;
    io::write_grid(&a.out, &grid)?;
    let mut manifest = RunManifest::new("gen-grid", &a.out);
    manifest.seeds.insert("layout".into(), a.seed);
    manifest.param("size", [width, height]);
    manifest.param("obstacle_frac", a.obstacle_frac);
    manifest.param("uncertain", spec.uncertain);
    manifest.param("step_cost", a.step_cost);
    manifest.param("gamma", a.gamma);
    manifest.write_for(&a.out)?;
    if let Some(p) = &a.mdp_out {
        io::write_mdp(p, &mdp)?;
    }
    Ok(format!(
        "{}x{} grid, {} obstacles ({} uncertain), {} states -> {}\n",
        width,
        height,
        grid.obstacles.len(),
        grid.uncertain_obstacles.len(),
        mdp.n_states(),
        a.out.display()
    ))
}

fn risk_of(p: &ProblemArgs) -> Result<RiskMeasure, CliError> {
    let risk = match p.measure {
        Measure::Expectation => RiskMeasure::Expectation,
        Measure::Cvar => RiskMeasure::Cvar { epsilon: p.epsilon },
        Measure::Evar => RiskMeasure::Evar { epsilon: p.epsilon },
    };
    risk.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if !(p.epsilon > 0.0 && p.epsilon <= 1.0) {
        return Err(CliError::Usage(format!("epsilon must lie in (0, 1], got {}", p.epsilon)));
    }
    Ok(risk)
}

/// Loads the model named by `m`, applying a discount override. The grid is
/// returned too when the model is a grid world.
fn load_model(
    m: &ModelArgs,
    gamma: Option<f64>,
    manifest: &mut RunManifest,
) -> Result<(Mdp, Option<GridConfig>), CliError> {
    if let Some(g) = gamma {
        if !(g > 0.0 && g < 1.0) {
            return Err(CliError::Usage(format!("gamma must lie in (0, 1), got {g}")));
        }
    }
    match (&m.grid, &m.mdp) {
        (Some(path), _) => {
            let mut grid = io::read_grid(path)?;
            manifest.input("grid", path)?;
            if let Some(g) = gamma {
                grid.discount = g;
            }
            let mdp = build_gridworld(&grid).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok((mdp, Some(grid)))
        }
        (None, Some(path)) => {
            let mut mdp = io::read_mdp(path)?;
            manifest.input("mdp", path)?;
            if let Some(g) = gamma {
                mdp = mdp.with_discount(g);
            }
            Ok((mdp, None))
        }
        (None, None) => Err(CliError::Usage("one of --grid or --mdp is required".into())),
    }
}

fn planner_config(p: &ProblemArgs, mdp: &Mdp) -> Result<PlannerConfig, CliError> {
    let risk = risk_of(p)?;
    if p.beta.len() != mdp.n_constraints() {
        return Err(CliError::Usage(format!(
            "{} budget(s) given, the model has {} constraint cost(s)",
            p.beta.len(),
            mdp.n_constraints()
        )));
    }
    let mut cfg = PlannerConfig::new(risk, p.beta.clone());
    cfg.warm_start = !p.cold_start;
    cfg.validate(mdp)?;
    Ok(cfg)
}

/// CSV of the solver iterations.
pub fn trace_csv(plan: &PlanResult, manifest_hash: &str) -> String {
    let mut out = format!(
        "# manifest_sha256={manifest_hash}\niteration,bound,penalized_objective,max_residual,tau,lp_iterations\n"
    );
    for r in &plan.trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration,
            io::fmt_num(r.bound),
            io::fmt_num(r.penalized_objective),
            io::fmt_num(r.max_residual),
            io::fmt_num(r.tau),
            r.lp_iterations
        );
    }
    out
}

pub fn cmd_plan(a: &PlanArgs) -> Result<String, CliError> {
    let mut manifest = RunManifest::new("plan", &a.out);
    let (mdp, _) = load_model(&a.model, a.problem.gamma, &mut manifest)?;
    let cfg = planner_config(&a.problem, &mdp)?;
    manifest.planner = Some(cfg.clone());
    manifest.param("gamma", mdp.discount());
    let t = Instant::now();
    let result = plan(&mdp, &cfg)?;
    let seconds = t.elapsed().as_secs_f64();
    let hash = manifest.write_for(&a.out)?;
    let trace_path = a.out.with_extension("trace.csv");
    io::write_text(&trace_path, &trace_csv(&result, &hash))?;
    let file = PlanFile {
        manifest_sha256: hash,
        solve_seconds: seconds,
        plan: result,
    };
    io::write_json(&a.out, &file)?;
    let r = &file.plan;
    match r.status {
        PlanStatus::Certified => {
            let mut msg = format!(
                "{}: lower bound {} (policy J {}), solve time {:.3} s -> {}\n",
                r.risk,
                io::fmt_num(r.lower_bound.unwrap_or(f64::NAN)),
                io::fmt_num(r.policy_objective),
                seconds,
                a.out.display()
            );
            for (i, c) in r.budget_checks.iter().enumerate() {
                if !c.satisfied {
                    let _ = writeln!(
                        msg,
                        "warning: extracted policy exceeds budget {i}: {} > {}",
                        io::fmt_num(c.value),
                        io::fmt_num(c.budget)
                    );
                }
            }
            Ok(msg)
        }
        PlanStatus::Infeasible => Err(CliError::Infeasible(format!(
            "{}: no policy meets the budgets (certified by a multiplier ray); plan written to {}",
            r.risk,
            a.out.display()
        ))),
        PlanStatus::NoCertifiedPlan => Err(CliError::Solver(format!(
            "no feasible point after {} iterations ({:?}); trace in {}",
            r.trace.len(),
            r.solver_status,
            trace_path.display()
        ))),
    }
}

pub fn read_plan(path: &Path) -> Result<PlanFile, IoError> {
    io::read_json(path)
}

/// Infeasible plans carry a policy but no value function.
fn check_dims(grid: &GridConfig, plan: &PlanResult, path: &Path) -> Result<(), CliError> {
    let values_ok = plan.v_star.is_empty() || plan.v_star.len() == grid.n_cells();
    if plan.policy.len() != grid.n_cells() || !values_ok {
        return Err(CliError::Usage(format!(
            "{}: plan covers {} states, the {}x{} grid has {}",
            path.display(),
            plan.policy.len(),
            grid.width,
            grid.height,
            grid.n_cells()
        )));
    }
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<String, CliError> {
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    if a.max_steps == 0 {
        return Err(CliError::Usage("--max-steps must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&a.perturb) {
        return Err(CliError::Usage(format!("--perturb must lie in [0, 1], got {}", a.perturb)));
    }
    let grid = io::read_grid(&a.grid)?;
    let plan_file = read_plan(&a.plan)?;
    let p = &plan_file.plan;
    check_dims(&grid, p, &a.plan)?;
    let mut manifest = RunManifest::new("evaluate", &a.out);
    manifest.input("grid", &a.grid)?;
    manifest.input("plan", &a.plan)?;
    manifest.seeds.insert("evaluation".into(), a.seed);
    manifest.param("runs", a.runs);
    manifest.param("perturb", a.perturb);
    manifest.param("max_steps", a.max_steps);
    let hash = manifest.write_for(&a.out)?;
    let metadata = ReportMetadata {
        width: grid.width,
        height: grid.height,
        measure: p.risk.name().into(),
        epsilon: p.risk.epsilon(),
        budgets: p.budgets.clone(),
        uncertain_obstacles: grid.uncertain_obstacles.len(),
        perturb_prob: a.perturb,
        seed: a.seed,
        max_steps: a.max_steps,
        bound: p.lower_bound,
        solve_seconds: Some(plan_file.solve_seconds),
    };
    let report = evaluate::parallel_report(
        &grid,
        &p.policy,
        a.runs,
        a.perturb,
        a.seed,
        a.max_steps,
        metadata,
        evaluate::thread_cap(),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    io::write_text(&a.out.with_extension("csv"), &evaluate::table_csv(&[&report], &hash))?;
    io::write_text(&a.out.with_extension("runs.csv"), &evaluate::runs_csv(&report, &hash))?;
    let msg = format!(
        "{} runs: failure rate {}, goal rate {}, mean discounted cost {} -> {}\n",
        report.runs,
        io::fmt_num(report.failure_rate),
        io::fmt_num(report.goal_rate),
        io::fmt_num(report.objective.mean),
        a.out.display()
    );
    io::write_json(
        &a.out,
        &ReportFile {
            manifest_sha256: hash,
            report,
        },
    )?;
    Ok(msg)
}

pub fn cmd_render(a: &RenderArgs) -> Result<String, CliError> {
    let grid = io::read_grid(&a.grid)?;
    let plan_file = read_plan(&a.plan)?;
    check_dims(&grid, &plan_file.plan, &a.plan)?;
    let mut manifest = RunManifest::new("render", &a.out);
    manifest.input("grid", &a.grid)?;
    manifest.input("plan", &a.plan)?;
    let hash = manifest.write_for(&a.out)?;
    let svg = render_svg(&grid, &plan_file.plan, Some(&hash))?;
    io::write_text(&a.out, &svg)?;
    Ok(format!("{}\n", a.out.display()))
}

pub fn cmd_oracle(a: &OracleArgs) -> Result<String, CliError> {
    let mut manifest = RunManifest::new("oracle", &a.out);
    let (mdp, _) = load_model(&a.model, a.problem.gamma, &mut manifest)?;
    let cfg = planner_config(&a.problem, &mdp)?;
    manifest.planner = Some(cfg.clone());
    let oracle = brute_force_constrained_optimum(&mdp, &cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let result = plan(&mdp, &cfg)?;
    let hash = manifest.write_for(&a.out)?;
    let lb = result.lower_bound;
    let gap = oracle.value().zip(lb).map(|(o, b)| o - b);
    let randomized_gap = oracle.randomized_value.zip(lb).map(|(o, b)| o - b);
    let file = OracleFile {
        manifest_sha256: hash,
        measure: cfg.risk,
        budgets: cfg.budgets.clone(),
        plan_status: result.status,
        lower_bound: lb,
        oracle,
        gap,
        randomized_gap,
    };
    io::write_json(&a.out, &file)?;
    match (file.oracle.value(), result.status) {
        (None, status) => Err(CliError::Infeasible(format!(
            "no deterministic policy meets the budgets (planner: {status:?}); report in {}",
            a.out.display()
        ))),
        (Some(best), _) => Ok(format!(
            "oracle optimum {} over {} policies, planner bound {}, gap {} -> {}\n",
            io::fmt_num(best),
            file.oracle.evaluated,
            lb.map(io::fmt_num).unwrap_or_else(|| "none".into()),
            gap.map(io::fmt_num).unwrap_or_else(|| "n/a".into()),
            a.out.display()
        )),
    }
}
