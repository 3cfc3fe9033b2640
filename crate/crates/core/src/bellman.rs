//! Fixed-point iteration of the risk Bellman operators.
//!
//! `T_λ V(s) = min_α [ c(s,α) + ⟨λ, d(s,α)⟩ + γ σ(V, s, p(·|s,α)) ]` and, for a
//! fixed policy, the same map without the minimum. Both are monotone
//! γ-contractions in the sup norm for any of the supported measures, so plain
//! Jacobi sweeps converge from any start.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::mdp::{CostTable, Mdp, Policy};
use crate::risk::{sigma_slices, RiskError, RiskMeasure};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Relative slack under which two action values count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BellmanError {
    #[error("risk evaluation failed at (s={state}, a={action}): {source}")]
    Risk {
        state: usize,
        action: usize,
        source: RiskError,
    },
    #[error("tolerance must be positive and finite")]
    Tolerance,
    #[error("expected {expected} multipliers, got {found}")]
    Lambda { expected: usize, found: usize },
    #[error("multipliers must be finite and non-negative")]
    NegativeLambda,
    #[error("policy does not assign a valid action to every state")]
    Policy,
    #[error("start vector has wrong length or non-finite entries")]
    Start,
    #[error("no convergence after {iterations} sweeps (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    /// Greedy policy with respect to the returned values.
    pub policy: Policy,
    pub iterations: usize,
    /// Sup-norm step `‖V_{k+1} − V_k‖∞` of every sweep.
    pub steps: Vec<f64>,
}

/// Scratch buffers for evaluating σ on one transition row.
#[derive(Default)]
pub(crate) struct RowScratch {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl RowScratch {
    /// `σ(V, s, p(·|s,α))` for the row of `(state, action)`.
    pub(crate) fn sigma(
        &mut self,
        mdp: &Mdp,
        risk: &RiskMeasure,
        v: &[f64],
        state: usize,
        action: usize,
    ) -> Result<f64, BellmanError> {
        let row = mdp.transition_row(state, action);
        self.values.clear();
        self.probs.clear();
        for &(j, p) in row {
            self.values.push(v[j]);
            self.probs.push(p);
        }
        if risk.is_linear() {
            return Ok(self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum());
        }
        sigma_slices(risk, &self.values, &self.probs)
            .map(|r| r.value)
            .map_err(|source| BellmanError::Risk {
                state,
                action,
                source,
            })
    }
}

/// `stage_cost(s,α) + γ σ(V, s, p(·|s,α))`.
pub fn q_value(
    mdp: &Mdp,
    stage_costs: &[f64],
    v: &[f64],
    risk: &RiskMeasure,
    state: usize,
    action: usize,
) -> Result<f64, BellmanError> {
    let mut scratch = RowScratch::default();
    Ok(stage_costs[mdp.pair(state, action)]
        + mdp.discount() * scratch.sigma(mdp, risk, v, state, action)?)
}

/// Greedy backup at one state; ties go to the lowest action index.
pub(crate) fn greedy_backup(
    mdp: &Mdp,
    stage_costs: &[f64],
    v: &[f64],
    risk: &RiskMeasure,
    state: usize,
    scratch: &mut RowScratch,
) -> Result<(f64, usize), BellmanError> {
    let gamma = mdp.discount();
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for a in 0..mdp.n_actions() {
        let q = stage_costs[mdp.pair(state, a)] + gamma * scratch.sigma(mdp, risk, v, state, a)?;
        if q < best - TIE_TOL * (1.0 + best.abs()) || best == f64::INFINITY {
            best = q;
            arg = a;
        }
    }
    Ok((best, arg))
}

/// Greedy policy `argmin_α [stage_cost + γσ(V)]` with lowest-index ties.
pub fn greedy_policy(
    mdp: &Mdp,
    stage_costs: &[f64],
    v: &[f64],
    risk: &RiskMeasure,
) -> Result<Policy, BellmanError> {
    let mut scratch = RowScratch::default();
    let actions = (0..mdp.n_states())
        .map(|s| greedy_backup(mdp, stage_costs, v, risk, s, &mut scratch).map(|(_, a)| a))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Policy(actions))
}

fn check_tol(tol: f64) -> Result<(), BellmanError> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(BellmanError::Tolerance)
    }
}

fn check_lambda(mdp: &Mdp, lambda: &[f64]) -> Result<(), BellmanError> {
    if lambda.len() != mdp.n_constraints() {
        return Err(BellmanError::Lambda {
            expected: mdp.n_constraints(),
            found: lambda.len(),
        });
    }
    if lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(BellmanError::NegativeLambda);
    }
    Ok(())
}

/// Runs `sweep` until the sup-norm error bound `γ/(1−γ)·step` drops below
/// `tol`. The sweep budget follows from the first step and the contraction
/// factor; running past it means σ is not behaving like a contraction.
fn iterate<F>(
    mdp: &Mdp,
    tol: f64,
    init: Vec<f64>,
    mut sweep: F,
) -> Result<(Vec<f64>, usize, Vec<f64>), BellmanError>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<(), BellmanError>,
{
    let gamma = mdp.discount();
    let target = tol * (1.0 - gamma) / gamma.max(f64::MIN_POSITIVE);
    let mut v = init;
    let mut next = vec![0.0; v.len()];
    let mut steps = Vec::new();
    let mut budget = usize::MAX;
    loop {
        sweep(&v, &mut next)?;
        let step = v
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        steps.push(step);
        core::mem::swap(&mut v, &mut next);
        if step <= target {
            return Ok((v, steps.len(), steps));
        }
        if steps.len() == 1 {
            let needed = libm::ceil(libm::log(target / step) / libm::log(gamma));
            budget = if needed.is_finite() {
                needed as usize + 50
            } else {
                1_000_000
            };
        }
        if steps.len() > budget {
            return Err(BellmanError::NoConvergence {
                iterations: steps.len(),
                last_step: step,
            });
        }
    }
}

/// Fixed point of `T_λ` to sup-norm accuracy `tol`, started from `V = 0`.
pub fn risk_value_iteration(
    mdp: &Mdp,
    lambda: &[f64],
    risk: &RiskMeasure,
    tol: f64,
) -> Result<ValueIteration, BellmanError> {
    risk_value_iteration_from(mdp, lambda, risk, tol, &vec![0.0; mdp.n_states()])
}

/// As [`risk_value_iteration`] but from `init`. When `init ≤ T_λ init`
/// the iterates increase monotonically and every one of them still
/// satisfies the Bellman inequality.
pub fn risk_value_iteration_from(
    mdp: &Mdp,
    lambda: &[f64],
    risk: &RiskMeasure,
    tol: f64,
    init: &[f64],
) -> Result<ValueIteration, BellmanError> {
    check_lambda(mdp, lambda)?;
    value_iteration_with_costs(mdp, &mdp.lagrangian_costs(lambda), risk, tol, init)
}

/// Value iteration for an arbitrary flat stage-cost table.
pub fn value_iteration_with_costs(
    mdp: &Mdp,
    costs: &[f64],
    risk: &RiskMeasure,
    tol: f64,
    init: &[f64],
) -> Result<ValueIteration, BellmanError> {
    check_tol(tol)?;
    if init.len() != mdp.n_states() || init.iter().any(|v| !v.is_finite()) {
        return Err(BellmanError::Start);
    }
    let mut scratch = RowScratch::default();
    let (values, iterations, steps) = iterate(mdp, tol, init.to_vec(), |v, out| {
        for (s, o) in out.iter_mut().enumerate() {
            *o = greedy_backup(mdp, costs, v, risk, s, &mut scratch)?.0;
        }
        Ok(())
    })?;
    let policy = greedy_policy(mdp, costs, &values, risk)?;
    Ok(ValueIteration {
        values,
        policy,
        iterations,
        steps,
    })
}

/// Per-state nested risk `V^π` of `stage_costs` (flat, pair-indexed) under a
/// fixed policy.
pub fn policy_values(
    mdp: &Mdp,
    policy: &Policy,
    stage_costs: &[f64],
    risk: &RiskMeasure,
    tol: f64,
) -> Result<Vec<f64>, BellmanError> {
    check_tol(tol)?;
    if !policy.is_total_for(mdp) {
        return Err(BellmanError::Policy);
    }
    let gamma = mdp.discount();
    let mut scratch = RowScratch::default();
    let (values, _, _) = iterate(mdp, tol, vec![0.0; mdp.n_states()], |v, out| {
        for (s, o) in out.iter_mut().enumerate() {
            let a = policy.action(s);
            *o = stage_costs[mdp.pair(s, a)] + gamma * scratch.sigma(mdp, risk, v, s, a)?;
        }
        Ok(())
    })?;
    Ok(values)
}

/// Flat cost table selected by `costs`.
pub fn cost_table(mdp: &Mdp, costs: CostTable) -> &[f64] {
    match costs {
        CostTable::Objective => mdp.objective_costs(),
        CostTable::Constraint(i) => &mdp.constraint_costs()[i],
    }
}

/// Nested discounted risk `⟨κ0, V^π⟩` of one cost table under `policy`.
pub fn policy_risk_evaluation(
    mdp: &Mdp,
    policy: &Policy,
    costs: CostTable,
    risk: &RiskMeasure,
    tol: f64,
) -> Result<f64, BellmanError> {
    let values = policy_values(mdp, policy, cost_table(mdp, costs), risk, tol)?;
    Ok(dot(mdp.initial_distribution(), &values))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
