//! Finite MDP data model.
//!
//! An [`Mdp`] is stored flat: every per-(state, action) table is indexed by
//! `state * n_actions + action`. Construction only checks that the tables have
//! consistent shapes; stochasticity and cost sanity are checked by
//! [`validate_mdp`], which reports every problem instead of stopping at the
//! first one.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on row sums and on the initial distribution.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("mdp has no states or no actions")]
    Empty,
    #[error("{table} has {found} entries, expected {expected}")]
    Shape {
        table: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("state {state} out of range (|S| = {n_states})")]
    StateOutOfRange { state: usize, n_states: usize },
    #[error("action {action} out of range (|Act| = {n_actions})")]
    ActionOutOfRange { action: usize, n_actions: usize },
    #[error("invalid distribution: {0}")]
    Distribution(&'static str),
}

/// Probability distribution over successor states with strictly positive
/// weights on distinct states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    support: Vec<usize>,
    probabilities: Vec<f64>,
}

impl DiscreteDistribution {
    /// Builds a distribution, dropping zero-probability atoms.
    ///
    /// Rejects negative or non-finite weights, repeated states and weights
    /// that do not sum to one within [`STOCHASTIC_TOL`].
    pub fn new(support: Vec<usize>, probabilities: Vec<f64>) -> Result<Self, MdpError> {
        if support.len() != probabilities.len() {
            return Err(MdpError::Distribution("support and probabilities differ in length"));
        }
        let mut s = Vec::with_capacity(support.len());
        let mut p = Vec::with_capacity(support.len());
        let mut total = 0.0;
        for (&state, &prob) in support.iter().zip(&probabilities) {
            if !prob.is_finite() || prob < 0.0 {
                return Err(MdpError::Distribution("negative or non-finite probability"));
            }
            total += prob;
            if prob == 0.0 {
                continue;
            }
            if s.contains(&state) {
                return Err(MdpError::Distribution("repeated support state"));
            }
            s.push(state);
            p.push(prob);
        }
        if s.is_empty() || (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(MdpError::Distribution("probabilities do not sum to one"));
        }
        Ok(Self {
            support: s,
            probabilities: p,
        })
    }

    pub fn point(state: usize) -> Self {
        Self {
            support: vec![state],
            probabilities: vec![1.0],
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support.iter().copied().zip(self.probabilities.iter().copied())
    }

    /// Gathers `values[s]` for every support state `s`.
    pub fn gather(&self, values: &[f64]) -> Vec<f64> {
        self.support.iter().map(|&s| values[s]).collect()
    }
}

/// One sparse transition row: `(successor, probability)` pairs. Rows are not
/// required to be valid until [`validate_mdp`] says so.
pub type TransitionRow = Vec<(usize, f64)>;

/// Finite discounted MDP with one objective cost and `n_c` constraint costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<TransitionRow>,
    objective_cost: Vec<f64>,
    constraint_costs: Vec<Vec<f64>>,
    initial_distribution: Vec<f64>,
    discount: f64,
}

impl Mdp {
    /// Assembles an MDP from flat `(state, action)`-indexed tables.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<TransitionRow>,
        objective_cost: Vec<f64>,
        constraint_costs: Vec<Vec<f64>>,
        initial_distribution: Vec<f64>,
        discount: f64,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 {
            return Err(MdpError::Empty);
        }
        let pairs = n_states * n_actions;
        check_len("transition", pairs, transitions.len())?;
        check_len("cost", pairs, objective_cost.len())?;
        for d in &constraint_costs {
            check_len("constraint_costs", pairs, d.len())?;
        }
        check_len("kappa0", n_states, initial_distribution.len())?;
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            objective_cost,
            constraint_costs,
            initial_distribution,
            discount,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of constraint cost functions `n_c`.
    pub fn n_constraints(&self) -> usize {
        self.constraint_costs.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial_distribution
    }

    #[inline]
    pub fn pair(&self, state: usize, action: usize) -> usize {
        state * self.n_actions + action
    }

    pub fn transition_row(&self, state: usize, action: usize) -> &[(usize, f64)] {
        &self.transitions[self.pair(state, action)]
    }

    pub fn transitions(&self) -> &[TransitionRow] {
        &self.transitions
    }

    #[inline]
    pub fn cost(&self, state: usize, action: usize) -> f64 {
        self.objective_cost[self.pair(state, action)]
    }

    pub fn objective_costs(&self) -> &[f64] {
        &self.objective_cost
    }

    #[inline]
    pub fn constraint_cost(&self, i: usize, state: usize, action: usize) -> f64 {
        self.constraint_costs[i][self.pair(state, action)]
    }

    pub fn constraint_costs(&self) -> &[Vec<f64>] {
        &self.constraint_costs
    }

    /// `c(s,α) + ⟨λ, d(s,α)⟩` for every pair, flat.
    pub fn lagrangian_costs(&self, lambda: &[f64]) -> Vec<f64> {
        let mut out = self.objective_cost.clone();
        for (d, &l) in self.constraint_costs.iter().zip(lambda) {
            if l != 0.0 {
                for (o, &di) in out.iter_mut().zip(d) {
                    *o += l * di;
                }
            }
        }
        out
    }

    /// Same MDP with every cost table multiplied by `factor`.
    pub fn scaled_costs(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.objective_cost.iter_mut().for_each(|c| *c *= factor);
        for d in &mut out.constraint_costs {
            d.iter_mut().for_each(|c| *c *= factor);
        }
        out
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    pub fn with_initial_distribution(mut self, kappa0: Vec<f64>) -> Result<Self, MdpError> {
        check_len("kappa0", self.n_states, kappa0.len())?;
        self.initial_distribution = kappa0;
        Ok(self)
    }

    /// Largest absolute cost over all tables, used to size iteration budgets.
    pub fn max_abs_cost(&self) -> f64 {
        self.objective_cost
            .iter()
            .chain(self.constraint_costs.iter().flatten())
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }
}

fn check_len(table: &'static str, expected: usize, found: usize) -> Result<(), MdpError> {
    if expected == found {
        Ok(())
    } else {
        Err(MdpError::Shape {
            table,
            expected,
            found,
        })
    }
}

/// Returns the stored transition row of `(state, action)` with
/// zero-probability entries pruned.
pub fn successor_distribution(
    mdp: &Mdp,
    state: usize,
    action: usize,
) -> Result<DiscreteDistribution, MdpError> {
    if state >= mdp.n_states {
        return Err(MdpError::StateOutOfRange {
            state,
            n_states: mdp.n_states,
        });
    }
    if action >= mdp.n_actions {
        return Err(MdpError::ActionOutOfRange {
            action,
            n_actions: mdp.n_actions,
        });
    }
    let row = mdp.transition_row(state, action);
    DiscreteDistribution::new(
        row.iter().map(|&(s, _)| s).collect(),
        row.iter().map(|&(_, p)| p).collect(),
    )
}

/// Deterministic stationary policy: one action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(pub Vec<usize>);

impl Policy {
    pub fn uniform(n_states: usize, action: usize) -> Self {
        Self(vec![action; n_states])
    }

    #[inline]
    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every state is mapped to an action of `mdp`.
    pub fn is_total_for(&self, mdp: &Mdp) -> bool {
        self.0.len() == mdp.n_states() && self.0.iter().all(|&a| a < mdp.n_actions())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostTable {
    Objective,
    Constraint(usize),
}

/// One violated invariant, with its location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValidationIssue {
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
        deficit: f64,
    },
    NegativeProbability {
        state: usize,
        action: usize,
        successor: usize,
        value: f64,
    },
    SuccessorOutOfRange {
        state: usize,
        action: usize,
        successor: usize,
    },
    DuplicateSuccessor {
        state: usize,
        action: usize,
        successor: usize,
    },
    InitialSum {
        sum: f64,
    },
    InitialNegative {
        state: usize,
        value: f64,
    },
    InvalidCost {
        table: CostTable,
        state: usize,
        action: usize,
        value: f64,
    },
    DiscountOutOfRange {
        discount: f64,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RowSum {
                state,
                action,
                sum,
                deficit,
            } => write!(
                f,
                "transition row (s={state}, a={action}) sums to {sum} (deficit {deficit})"
            ),
            Self::NegativeProbability {
                state,
                action,
                successor,
                value,
            } => write!(
                f,
                "transition (s={state}, a={action}) -> {successor} has negative probability {value}"
            ),
            Self::SuccessorOutOfRange {
                state,
                action,
                successor,
            } => write!(f, "transition (s={state}, a={action}) targets unknown state {successor}"),
            Self::DuplicateSuccessor {
                state,
                action,
                successor,
            } => write!(f, "transition (s={state}, a={action}) lists state {successor} twice"),
            Self::InitialSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Self::InitialNegative { state, value } => {
                write!(f, "initial distribution is negative at state {state}: {value}")
            }
            Self::InvalidCost {
                table,
                state,
                action,
                value,
            } => write!(
                f,
                "{table:?} cost at (s={state}, a={action}) is {value}; costs must be finite and non-negative"
            ),
            Self::DiscountOutOfRange { discount } => {
                write!(f, "discount {discount} is not strictly inside (0, 1)")
            }
        }
    }
}

/// Every invariant violation found in an MDP. Empty iff the MDP is well formed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

pub fn validate_mdp(mdp: &Mdp) -> ValidationReport {
    let mut issues = Vec::new();
    let n = mdp.n_states;
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let row = mdp.transition_row(s, a);
            let mut sum = 0.0;
            for (k, &(succ, p)) in row.iter().enumerate() {
                if succ >= n {
                    issues.push(ValidationIssue::SuccessorOutOfRange {
                        state: s,
                        action: a,
                        successor: succ,
                    });
                }
                if row[..k].iter().any(|&(other, _)| other == succ) {
                    issues.push(ValidationIssue::DuplicateSuccessor {
                        state: s,
                        action: a,
                        successor: succ,
                    });
                }
                if !(p >= 0.0) {
                    issues.push(ValidationIssue::NegativeProbability {
                        state: s,
                        action: a,
                        successor: succ,
                        value: p,
                    });
                }
                sum += p;
            }
            if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                issues.push(ValidationIssue::RowSum {
                    state: s,
                    action: a,
                    sum,
                    deficit: 1.0 - sum,
                });
            }
        }
    }

    let mut total = 0.0;
    for (s, &k) in mdp.initial_distribution.iter().enumerate() {
        if !(k >= 0.0) {
            issues.push(ValidationIssue::InitialNegative { state: s, value: k });
        }
        total += k;
    }
    if !((total - 1.0).abs() <= STOCHASTIC_TOL) {
        issues.push(ValidationIssue::InitialSum { sum: total });
    }

    let tables = core::iter::once((CostTable::Objective, &mdp.objective_cost)).chain(
        mdp.constraint_costs
            .iter()
            .enumerate()
            .map(|(i, d)| (CostTable::Constraint(i), d)),
    );
    for (table, costs) in tables {
        for (k, &value) in costs.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                issues.push(ValidationIssue::InvalidCost {
                    table,
                    state: k / mdp.n_actions,
                    action: k % mdp.n_actions,
                    value,
                });
            }
        }
    }

    if !(mdp.discount > 0.0 && mdp.discount < 1.0) {
        issues.push(ValidationIssue::DiscountOutOfRange {
            discount: mdp.discount,
        });
    }
    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Mdp {
        Mdp::new(
            2,
            2,
            vec![
                vec![(0, 0.5), (1, 0.5)],
                vec![(1, 1.0)],
                vec![(1, 1.0)],
                vec![(0, 0.25), (1, 0.75)],
            ],
            vec![1.0, 2.0, 0.0, 0.5],
            vec![vec![1.0, 1.0, 0.0, 0.0]],
            vec![1.0, 0.0],
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn well_formed_mdp_has_empty_report() {
        assert!(validate_mdp(&two_state()).is_valid());
    }

    #[test]
    fn short_row_reports_location_and_deficit() {
        let mut mdp = two_state();
        let k = mdp.pair(1, 0);
        mdp.transitions[k] = vec![(0, 0.4), (1, 0.5)];
        let report = validate_mdp(&mdp);
        assert_eq!(report.issues.len(), 1);
        match &report.issues[0] {
            ValidationIssue::RowSum {
                state,
                action,
                deficit,
                ..
            } => {
                assert_eq!((*state, *action), (1, 0));
                assert!((deficit - 0.1).abs() < 1e-12);
            }
            other => panic!("unexpected issue {other:?}"),
        }
    }

    #[test]
    fn negative_initial_mass_is_flagged() {
        let mdp = two_state().with_initial_distribution(vec![1.1, -0.1]).unwrap();
        let report = validate_mdp(&mdp);
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, ValidationIssue::InitialNegative { state: 1, .. })));
    }

    #[test]
    fn bad_discount_and_costs_are_reported_together() {
        let mut mdp = two_state().with_discount(1.0);
        mdp.objective_cost[3] = -1.0;
        mdp.constraint_costs[0][0] = f64::NAN;
        let report = validate_mdp(&mdp);
        assert_eq!(report.issues.len(), 3);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let err = Mdp::new(2, 1, vec![vec![(0, 1.0)]], vec![0.0; 2], vec![], vec![1.0, 0.0], 0.5);
        assert!(matches!(err, Err(MdpError::Shape { table: "transition", .. })));
    }

    #[test]
    fn successor_distribution_prunes_zero_entries() {
        let mdp = Mdp::new(
            2,
            1,
            vec![vec![(0, 0.0), (1, 1.0)], vec![(1, 1.0)]],
            vec![0.0; 2],
            vec![],
            vec![1.0, 0.0],
            0.5,
        )
        .unwrap();
        let d = successor_distribution(&mdp, 0, 0).unwrap();
        assert_eq!(d.support(), &[1]);
        assert!(successor_distribution(&mdp, 2, 0).is_err());
        assert!(successor_distribution(&mdp, 0, 1).is_err());
    }

    #[test]
    fn distribution_rejects_bad_input() {
        assert!(DiscreteDistribution::new(vec![0, 0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![0, 1], vec![0.5, 0.4]).is_err());
        assert!(DiscreteDistribution::new(vec![0, 1], vec![1.5, -0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![0, 1], vec![1.0, 0.0]).is_ok());
    }
}
