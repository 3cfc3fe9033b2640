//! Parallel Monte Carlo evaluation and Table-1 style tables.

use std::fmt::Write as _;

use rayon::prelude::*;
use riskmdp_core::grid::GridError;
use riskmdp_core::sim::{grid_run, EvaluationReport, ReportMetadata};
use riskmdp_core::{GridConfig, Policy};

/// Environment variable capping the evaluation thread count.
pub const THREADS_VAR: &str = "RISKMDP_THREADS";

pub const DEFAULT_MAX_STEPS: usize = 400;

/// Thread cap from [`THREADS_VAR`]; `None` when unset, empty or not a
/// positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Same report as the sequential `monte_carlo_report`: each run derives its
/// seeds from `(seed, run)` and the aggregation sorts by run index, so the
/// thread count never changes the output.
#[allow(clippy::too_many_arguments)]
pub fn parallel_report(
    grid: &GridConfig,
    policy: &Policy,
    runs: usize,
    perturb_prob: f64,
    seed: u64,
    max_steps: usize,
    metadata: ReportMetadata,
    threads: Option<usize>,
) -> Result<EvaluationReport, GridError> {
    let work = || {
        (0..runs)
            .into_par_iter()
            .map(|r| grid_run(grid, policy, perturb_prob, seed, r, max_steps))
            .collect::<Result<Vec<_>, _>>()
    };
    let per_run = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(work)?,
            Err(_) => work()?,
        },
        None => work()?,
    };
    Ok(EvaluationReport::aggregate(metadata, per_run))
}

pub const TABLE_HEADER: &str =
    "measure,epsilon,grid,budget,value,solve_seconds,uncertain_obstacles,failure_rate,runs";

/// One Table-1 row: measure, grid size, value (certified bound), solve
/// time, number of uncertain obstacles and failure rate.
pub fn table_row(report: &EvaluationReport) -> String {
    let m = &report.metadata;
    let opt = |x: Option<f64>| x.map(crate::io::fmt_num).unwrap_or_default();
    let budgets: Vec<String> = m.budgets.iter().map(|&b| crate::io::fmt_num(b)).collect();
    format!(
        "{},{},{}x{},{},{},{},{},{},{}",
        m.measure,
        opt(m.epsilon),
        m.width,
        m.height,
        budgets.join(";"),
        opt(m.bound),
        opt(m.solve_seconds),
        m.uncertain_obstacles,
        crate::io::fmt_num(report.failure_rate),
        report.runs
    )
}

/// Table-1 CSV with a manifest comment line.
pub fn table_csv(reports: &[&EvaluationReport], manifest_hash: &str) -> String {
    let mut out = format!("# manifest_sha256={manifest_hash}\n{TABLE_HEADER}\n");
    for r in reports {
        let _ = writeln!(out, "{}", table_row(r));
    }
    out
}

/// Per-run CSV: one line per Monte Carlo run.
pub fn runs_csv(report: &EvaluationReport, manifest_hash: &str) -> String {
    let mut out = format!(
        "# manifest_sha256={manifest_hash}\nrun,steps,collided,first_collision,reached_goal,truncated,moved_obstacles,discounted_objective"
    );
    let n_c = report.constraints.len();
    for i in 0..n_c {
        let _ = write!(out, ",discounted_constraint_{i}");
    }
    out.push('\n');
    for r in &report.per_run {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.run,
            r.steps,
            r.collided,
            r.first_collision.map(|t| t.to_string()).unwrap_or_default(),
            r.reached_goal,
            r.truncated,
            r.moved_obstacles,
            crate::io::fmt_num(r.discounted_objective)
        );
        for d in &r.discounted_constraints {
            let _ = write!(out, ",{}", crate::io::fmt_num(*d));
        }
        out.push('\n');
    }
    out
}
