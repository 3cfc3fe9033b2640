//! Lagrangian planner: builds the Bellman-inequality program for a risk
//! measure, solves it, extracts the greedy policy and reports the lower bound
//! `⟨κ0, V⟩ − ⟨λ, β⟩` together with an a-posteriori budget audit of the
//! extracted policy.
//!
//! After the solver returns `(V, λ)`, `V` is pushed up to the fixed point of
//! `T_λ` by value iteration started at `V`. Starting from a point with
//! `V ≤ T_λ V` every iterate keeps that property, so the bound can only
//! improve and stays sound, and `V` becomes meaningful at states the initial
//! distribution never weights (which the greedy policy needs).

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bellman::{
    self, policy_risk_evaluation, risk_value_iteration_from, BellmanError, ValueIteration,
};
use crate::dcp::{ccp_solve, CcpSettings, CcpStatus, DcpError, DcpPoint, DcpProgram, TraceRow};
use crate::lp::{solve_lp, LpError, LpStatus};
use crate::mdp::{validate_mdp, CostTable, Mdp, Policy};
use crate::risk::{sigma_slices, RiskMeasure};

/// Slack allowed when auditing `D^i(π) ≤ β^i`.
pub const BUDGET_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub risk: RiskMeasure,
    pub budgets: Vec<f64>,
    #[serde(default)]
    pub solver: CcpSettings,
    /// Sup-norm tolerance of the fixed-point iterations.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Start CVaR from the expectation optimum and EVaR from the CVaR
    /// solution at the same level, unless `solver.init` is set.
    #[serde(default = "default_warm_start")]
    pub warm_start: bool,
}

fn default_warm_start() -> bool {
    true
}

fn default_tol() -> f64 {
    bellman::DEFAULT_TOL
}

impl PlannerConfig {
    pub fn new(risk: RiskMeasure, budgets: Vec<f64>) -> Self {
        Self {
            risk,
            budgets,
            solver: CcpSettings::default(),
            tol: default_tol(),
            warm_start: true,
        }
    }

    pub fn validate(&self, mdp: &Mdp) -> Result<(), PlanError> {
        self.risk
            .validate()
            .map_err(|_| PlanError::Config("risk level must lie in (0, 1]"))?;
        if self.budgets.len() != mdp.n_constraints() {
            return Err(PlanError::Config("one budget per constraint cost is required"));
        }
        if self.budgets.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(PlanError::Config("budgets must be positive and finite"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(PlanError::Config("tolerance must be positive"));
        }
        self.solver.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid planner configuration: {0}")]
    Config(&'static str),
    #[error("invalid mdp: {0}")]
    InvalidMdp(String),
    #[error(transparent)]
    Dcp(#[from] DcpError),
    #[error(transparent)]
    Bellman(#[from] BellmanError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStatus {
    /// Feasible `(V, λ)` found; `lower_bound` is certified.
    Certified,
    /// The Lagrangian supremum is `+∞`: no policy meets the budgets.
    Infeasible,
    /// The solver never reached a feasible point.
    NoCertifiedPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetCheck {
    pub budget: f64,
    /// `D^i_γ(κ0, π)` of the extracted policy under the planning measure.
    pub value: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub status: PlanStatus,
    pub risk: RiskMeasure,
    pub budgets: Vec<f64>,
    pub kappa0: Vec<f64>,
    pub v_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    /// Minimizing `ζ` of σ at the most likely initial state under the
    /// extracted action (CVaR quantile, EVaR tilt).
    pub zeta_star: Option<f64>,
    /// EVaR only: `ζ*·V*` and `ζ*·λ*`, the change of variables in which the
    /// bound reads `(1/ζ)(⟨κ0, Ṽ⟩ − ⟨λ̃, β⟩)`.
    pub v_tilde: Option<Vec<f64>>,
    pub lambda_tilde: Option<Vec<f64>>,
    /// `⟨κ0, V*⟩ − ⟨λ*, β⟩`; `None` unless certified.
    pub lower_bound: Option<f64>,
    /// The same quantity at the solver's own iterate, before value iteration.
    pub solver_bound: Option<f64>,
    pub policy: Policy,
    /// `J_γ(κ0, π)` of the extracted policy.
    pub policy_objective: f64,
    pub budget_checks: Vec<BudgetCheck>,
    pub solver_status: CcpStatus,
    pub trace: Vec<TraceRow>,
    /// Multiplier direction along which the Lagrangian grows without bound.
    pub lambda_ray: Option<Vec<f64>>,
}

impl PlanResult {
    /// Recomputes `⟨κ0, V*⟩ − ⟨λ*, β⟩` from the stored vectors.
    pub fn recompute_bound(&self) -> f64 {
        bellman::dot(&self.kappa0, &self.v_star) - bellman::dot(&self.lambda_star, &self.budgets)
    }

    /// `(1/ζ)(⟨κ0, Ṽ⟩ − ⟨λ̃, β⟩)` when tilde variables are stored.
    pub fn tilde_bound(&self) -> Option<f64> {
        let z = self.zeta_star?;
        let vt = self.v_tilde.as_ref()?;
        let lt = self.lambda_tilde.as_ref()?;
        Some((bellman::dot(&self.kappa0, vt) - bellman::dot(lt, &self.budgets)) / z)
    }

    pub fn budgets_met(&self) -> bool {
        self.budget_checks.iter().all(|c| c.satisfied)
    }
}

/// The Bellman-inequality program of `mdp` under `cfg`.
pub fn assemble_program(mdp: &Mdp, cfg: &PlannerConfig) -> Result<DcpProgram, PlanError> {
    check_inputs(mdp, cfg)?;
    Ok(DcpProgram::from_mdp(mdp, cfg.budgets.clone(), cfg.risk)?)
}

fn check_inputs(mdp: &Mdp, cfg: &PlannerConfig) -> Result<(), PlanError> {
    let report = validate_mdp(mdp);
    if let Some(issue) = report.issues.first() {
        return Err(PlanError::InvalidMdp(alloc::format!(
            "{issue} ({} issue(s) in total)",
            report.issues.len()
        )));
    }
    cfg.validate(mdp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationLp {
    pub status: LpStatus,
    pub v: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `⟨κ0, V*⟩ − ⟨λ*, β⟩`.
    pub objective: f64,
    pub ray: Option<DcpPoint>,
    pub lp_iterations: usize,
}

/// Exact LP of the risk-neutral case: `σ` is the conditional expectation, so
/// the Bellman inequalities are linear.
pub fn solve_expectation_lp(mdp: &Mdp, beta: &[f64]) -> Result<ExpectationLp, PlanError> {
    let cfg = PlannerConfig::new(RiskMeasure::Expectation, beta.to_vec());
    let program = assemble_program(mdp, &cfg)?;
    let n_s = program.n_states;
    let lp = program.linearize_g2(&DcpPoint::zeros(n_s, beta.len()), None)?;
    let sol = solve_lp(&lp)?;
    let iters = sol.diagnostics.iterations;
    Ok(match sol.status {
        LpStatus::Optimal => ExpectationLp {
            status: LpStatus::Optimal,
            v: sol.x[..n_s].to_vec(),
            lambda: sol.x[n_s..].iter().map(|l| l.max(0.0)).collect(),
            objective: -sol.objective,
            ray: None,
            lp_iterations: iters,
        },
        status => ExpectationLp {
            status,
            v: Vec::new(),
            lambda: Vec::new(),
            objective: if status == LpStatus::Unbounded {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            ray: sol.certificate.map(|d| DcpPoint {
                v: d[..n_s].to_vec(),
                lambda: d[n_s..].to_vec(),
            }),
            lp_iterations: iters,
        },
    })
}

/// `π(s) = argmin_α [ c(s,α) + ⟨λ, d(s,α)⟩ + γσ(V, s, p(·|s,α)) ]`, ties to
/// the lowest action index.
pub fn extract_policy(
    mdp: &Mdp,
    v: &[f64],
    lambda: &[f64],
    risk: &RiskMeasure,
) -> Result<Policy, PlanError> {
    Ok(bellman::greedy_policy(mdp, &mdp.lagrangian_costs(lambda), v, risk)?)
}

/// Solves the constrained problem for `cfg.risk` and packages the result.
pub fn plan(mdp: &Mdp, cfg: &PlannerConfig) -> Result<PlanResult, PlanError> {
    let program = assemble_program(mdp, cfg)?;
    let (solver_status, point, trace, ray) = solve(mdp, cfg, &program)?;
    match solver_status {
        CcpStatus::Unbounded => infeasible_result(mdp, cfg, ray, trace),
        CcpStatus::NoFeasiblePoint => {
            let mut r = infeasible_result(mdp, cfg, None, trace)?;
            r.status = PlanStatus::NoCertifiedPlan;
            r.solver_status = CcpStatus::NoFeasiblePoint;
            Ok(r)
        }
        CcpStatus::Converged | CcpStatus::MaxIterations => {
            let solver_bound = program.bound(&point);
            let vi = risk_value_iteration_from(mdp, &point.lambda, &cfg.risk, cfg.tol, &point.v)?;
            let mut result = package(mdp, cfg, vi, point.lambda, solver_status, trace)?;
            result.solver_bound = Some(solver_bound);
            Ok(result)
        }
    }
}

type Solved = (CcpStatus, DcpPoint, Vec<TraceRow>, Option<DcpPoint>);

fn solve(mdp: &Mdp, cfg: &PlannerConfig, program: &DcpProgram) -> Result<Solved, PlanError> {
    if cfg.risk.is_linear() {
        let lp = solve_expectation_lp(mdp, &cfg.budgets)?;
        let status = match lp.status {
            LpStatus::Optimal => CcpStatus::Converged,
            LpStatus::Unbounded => CcpStatus::Unbounded,
            LpStatus::Infeasible => CcpStatus::NoFeasiblePoint,
        };
        let trace = if lp.status == LpStatus::Optimal {
            alloc::vec![TraceRow {
                iteration: 1,
                bound: lp.objective,
                penalized_objective: -lp.objective,
                max_residual: program.max_residual(&DcpPoint {
                    v: lp.v.clone(),
                    lambda: lp.lambda.clone(),
                })?,
                tau: cfg.solver.tau0,
                lp_iterations: lp.lp_iterations,
            }]
        } else {
            Vec::new()
        };
        let point = DcpPoint {
            v: lp.v,
            lambda: lp.lambda,
        };
        return Ok((status, point, trace, lp.ray));
    }
    let mut settings = cfg.solver.clone();
    if settings.init.is_none() && cfg.warm_start {
        // E ≤ CVaR_ε ≤ EVaR_ε pointwise, so a point satisfying the Bellman
        // inequalities of the milder measure satisfies those of the harsher
        // one, and a multiplier ray of the milder problem is one here too.
        let milder = match cfg.risk {
            RiskMeasure::Evar { epsilon } => RiskMeasure::Cvar { epsilon },
            _ => RiskMeasure::Expectation,
        };
        let sub_cfg = PlannerConfig {
            risk: milder,
            ..cfg.clone()
        };
        let sub_program = assemble_program(mdp, &sub_cfg)?;
        let (status, point, _, ray) = solve(mdp, &sub_cfg, &sub_program)?;
        match status {
            CcpStatus::Unbounded => return Ok((status, point, Vec::new(), ray)),
            CcpStatus::Converged | CcpStatus::MaxIterations => settings.init = Some(point),
            CcpStatus::NoFeasiblePoint => {}
        }
    }
    let sol = ccp_solve(program, &settings)?;
    Ok((sol.status, sol.point, sol.trace, sol.ray))
}

fn package(
    mdp: &Mdp,
    cfg: &PlannerConfig,
    vi: ValueIteration,
    lambda: Vec<f64>,
    solver_status: CcpStatus,
    trace: Vec<TraceRow>,
) -> Result<PlanResult, PlanError> {
    let ValueIteration { values, policy, .. } = vi;
    let (policy_objective, budget_checks) = audit(mdp, cfg, &policy)?;
    let zeta_star = zeta_at_start(mdp, &cfg.risk, &values, &policy);
    let tilde = match (cfg.risk, zeta_star) {
        (RiskMeasure::Evar { .. }, Some(z)) if z > 0.0 => Some(z),
        _ => None,
    };
    let mut result = PlanResult {
        status: PlanStatus::Certified,
        risk: cfg.risk,
        budgets: cfg.budgets.clone(),
        kappa0: mdp.initial_distribution().to_vec(),
        v_tilde: tilde.map(|z| values.iter().map(|v| z * v).collect()),
        lambda_tilde: tilde.map(|z| lambda.iter().map(|l| z * l).collect()),
        v_star: values,
        lambda_star: lambda,
        zeta_star,
        lower_bound: None,
        solver_bound: None,
        policy,
        policy_objective,
        budget_checks,
        solver_status,
        trace,
        lambda_ray: None,
    };
    result.lower_bound = Some(result.recompute_bound());
    Ok(result)
}

/// Result for an infeasible instance. The reported policy is the limit of the
/// greedy policy as `λ → ∞` along the ray: it minimizes the nested risk of
/// the weighted constraint costs alone.
fn infeasible_result(
    mdp: &Mdp,
    cfg: &PlannerConfig,
    ray: Option<DcpPoint>,
    trace: Vec<TraceRow>,
) -> Result<PlanResult, PlanError> {
    let n_c = mdp.n_constraints();
    let mut dir: Vec<f64> = ray
        .as_ref()
        .map(|r| r.lambda.iter().map(|l| l.max(0.0)).collect())
        .unwrap_or_default();
    let norm: f64 = dir.iter().sum();
    if dir.len() != n_c || norm <= 0.0 {
        dir = alloc::vec![1.0; n_c];
    } else {
        dir.iter_mut().for_each(|l| *l /= norm);
    }
    let mut costs = alloc::vec![0.0; mdp.n_states() * mdp.n_actions()];
    for (d, &w) in mdp.constraint_costs().iter().zip(&dir) {
        for (c, &di) in costs.iter_mut().zip(d) {
            *c += w * di;
        }
    }
    let zero = alloc::vec![0.0; mdp.n_states()];
    let vi = bellman::value_iteration_with_costs(mdp, &costs, &cfg.risk, cfg.tol, &zero)?;
    let (policy_objective, budget_checks) = audit(mdp, cfg, &vi.policy)?;
    Ok(PlanResult {
        status: PlanStatus::Infeasible,
        risk: cfg.risk,
        budgets: cfg.budgets.clone(),
        kappa0: mdp.initial_distribution().to_vec(),
        v_star: Vec::new(),
        lambda_star: Vec::new(),
        zeta_star: None,
        v_tilde: None,
        lambda_tilde: None,
        lower_bound: None,
        solver_bound: None,
        policy: vi.policy,
        policy_objective,
        budget_checks,
        solver_status: CcpStatus::Unbounded,
        trace,
        lambda_ray: ray.map(|r| r.lambda),
    })
}

/// Evaluates `J` and every `D^i` of `policy` under the planning measure.
fn audit(
    mdp: &Mdp,
    cfg: &PlannerConfig,
    policy: &Policy,
) -> Result<(f64, Vec<BudgetCheck>), PlanError> {
    let j = policy_risk_evaluation(mdp, policy, CostTable::Objective, &cfg.risk, cfg.tol)?;
    let checks = cfg
        .budgets
        .iter()
        .enumerate()
        .map(|(i, &budget)| {
            let value =
                policy_risk_evaluation(mdp, policy, CostTable::Constraint(i), &cfg.risk, cfg.tol)?;
            Ok(BudgetCheck {
                budget,
                value,
                satisfied: value <= budget + BUDGET_TOL,
            })
        })
        .collect::<Result<Vec<_>, PlanError>>()?;
    Ok((j, checks))
}

fn zeta_at_start(mdp: &Mdp, risk: &RiskMeasure, v: &[f64], policy: &Policy) -> Option<f64> {
    if risk.is_linear() {
        return None;
    }
    let kappa = mdp.initial_distribution();
    let s0 = (0..kappa.len()).fold(0, |b, s| if kappa[s] > kappa[b] { s } else { b });
    let row = mdp.transition_row(s0, policy.action(s0));
    let values: Vec<f64> = row.iter().map(|&(j, _)| v[j]).collect();
    let probs: Vec<f64> = row.iter().map(|&(_, p)| p).collect();
    sigma_slices(risk, &values, &probs).ok()?.zeta_star
}
