//! Exhaustive search over deterministic stationary policies, for checking
//! the planner on small instances.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bellman::{policy_values, BellmanError};
use crate::mdp::{validate_mdp, Mdp, Policy};
use crate::planner::PlannerConfig;
use crate::risk::RiskMeasure;

/// Largest number of policies the oracle will enumerate.
pub const MAX_POLICIES: u64 = 1_000_000;

/// Fixed-point tolerance used for every policy evaluation.
pub const ORACLE_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("{n_actions}^{n_states} policies exceed the enumeration limit of {limit}")]
    TooLarge {
        n_states: usize,
        n_actions: usize,
        limit: u64,
    },
    #[error("invalid instance: {0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Bellman(#[from] BellmanError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub policy: Policy,
    /// `J_γ(κ0, π)`.
    pub objective: f64,
    /// `D^i_γ(κ0, π)` for every constraint.
    pub constraints: Vec<f64>,
}

impl PolicyEvaluation {
    pub fn feasible(&self, budgets: &[f64]) -> bool {
        self.constraints.iter().zip(budgets).all(|(d, b)| *d <= *b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Minimum-`J` policy among those meeting every budget; ties go to the
    /// lexicographically smallest policy. `None` when no policy qualifies.
    pub best: Option<PolicyEvaluation>,
    pub evaluated: usize,
    pub feasible_count: usize,
    /// Expectation with one constraint only: optimum over randomized
    /// stationary policies, i.e. the lower convex hull of the `(D, J)` points
    /// of all deterministic policies evaluated at `β`.
    pub randomized_value: Option<f64>,
}

impl OracleResult {
    pub fn value(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.objective)
    }
}

/// Number of deterministic policies, or an error above [`MAX_POLICIES`].
pub fn policy_count(mdp: &Mdp) -> Result<u64, OracleError> {
    let too_large = OracleError::TooLarge {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        limit: MAX_POLICIES,
    };
    let mut count: u64 = 1;
    for _ in 0..mdp.n_states() {
        count = count
            .checked_mul(mdp.n_actions() as u64)
            .filter(|&c| c <= MAX_POLICIES)
            .ok_or_else(|| too_large.clone())?;
    }
    Ok(count)
}

/// The `index`-th policy in lexicographic order (state 0 most significant).
pub fn policy_at(mdp: &Mdp, mut index: u64) -> Policy {
    let a = mdp.n_actions() as u64;
    let mut actions = alloc::vec![0usize; mdp.n_states()];
    for slot in actions.iter_mut().rev() {
        *slot = (index % a) as usize;
        index /= a;
    }
    Policy(actions)
}

/// Evaluates `J` and all `D^i` of one policy under `risk`.
pub fn evaluate_policy(
    mdp: &Mdp,
    policy: &Policy,
    risk: &RiskMeasure,
) -> Result<PolicyEvaluation, OracleError> {
    let kappa = mdp.initial_distribution();
    let eval = |costs: &[f64]| -> Result<f64, OracleError> {
        let v = policy_values(mdp, policy, costs, risk, ORACLE_TOL)?;
        Ok(kappa.iter().zip(&v).map(|(k, v)| k * v).sum())
    };
    let objective = eval(mdp.objective_costs())?;
    let constraints = mdp
        .constraint_costs()
        .iter()
        .map(|d| eval(d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PolicyEvaluation {
        policy: policy.clone(),
        objective,
        constraints,
    })
}

/// Enumerates every deterministic stationary policy.
pub fn enumerate_policies(
    mdp: &Mdp,
    risk: &RiskMeasure,
) -> Result<Vec<PolicyEvaluation>, OracleError> {
    if !validate_mdp(mdp).is_valid() {
        return Err(OracleError::Invalid("mdp failed validation"));
    }
    let n = policy_count(mdp)?;
    (0..n)
        .map(|i| evaluate_policy(mdp, &policy_at(mdp, i), risk))
        .collect()
}

/// Reduces evaluated policies to the constrained optimum.
pub fn summarize(evals: &[PolicyEvaluation], cfg: &PlannerConfig) -> OracleResult {
    let mut best: Option<&PolicyEvaluation> = None;
    let mut feasible_count = 0;
    for e in evals {
        if !e.feasible(&cfg.budgets) {
            continue;
        }
        feasible_count += 1;
        let better = match best {
            None => true,
            Some(b) => e
                .objective
                .total_cmp(&b.objective)
                .then_with(|| e.policy.cmp(&b.policy))
                .is_lt(),
        };
        if better {
            best = Some(e);
        }
    }
    let randomized_value = (cfg.risk.is_linear() && cfg.budgets.len() == 1)
        .then(|| hull_value(evals, cfg.budgets[0]))
        .flatten();
    OracleResult {
        best: best.cloned(),
        evaluated: evals.len(),
        feasible_count,
        randomized_value,
    }
}

/// `min { J : (D, J) ∈ conv(points), D ≤ β }`, or `None` if every point
/// has `D > β`.
fn hull_value(evals: &[PolicyEvaluation], beta: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = evals
        .iter()
        .map(|e| (e.constraints[0], e.objective))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if pts.first()?.0 > beta {
        return None;
    }
    // Lower hull by Andrew's monotone chain.
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    // The hull is convex, so its minimum over D ≤ β is either a vertex left of
    // β or the interpolation on the segment crossing β.
    let mut best = f64::INFINITY;
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.0 <= beta {
            best = best.min(a.1);
        }
        if a.0 <= beta && beta < b.0 {
            let t = (beta - a.0) / (b.0 - a.0);
            best = best.min(a.1 + t * (b.1 - a.1));
        }
    }
    let last = *hull.last()?;
    if last.0 <= beta {
        best = best.min(last.1);
    }
    Some(best)
}

/// Minimum-`J` deterministic policy subject to `D^i ≤ β^i` under
/// `cfg.risk`, by exhaustive enumeration.
pub fn brute_force_constrained_optimum(
    mdp: &Mdp,
    cfg: &PlannerConfig,
) -> Result<OracleResult, OracleError> {
    if cfg.budgets.len() != mdp.n_constraints() {
        return Err(OracleError::Invalid("one budget per constraint cost is required"));
    }
    let evals = enumerate_policies(mdp, &cfg.risk)?;
    Ok(summarize(&evals, cfg))
}
