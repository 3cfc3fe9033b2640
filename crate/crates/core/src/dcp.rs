//! Bellman-inequality difference-of-convex programs and the penalty
//! convex-concave procedure.
//!
//! The program, in variables `V ∈ ℝ^|S|` and `λ ∈ ℝ^{n_c}_{≥0}`, is
//!
//! ```text
//! minimize   ⟨λ, β⟩ − ⟨κ0, V⟩
//! subject to V(s) − [c(s,α) + ⟨λ, d(s,α)⟩] − γ σ(V, s, p(·|s,α)) ≤ 0   ∀ (s, α)
//! ```
//!
//! i.e. `f1(V) − g1(λ) − g2(V) ≤ 0` with `f1`, `g1` affine and `g2 = γσ`
//! convex. Replacing `g2` by its tangent at the current iterate gives an LP
//! whose feasible set lies inside the true one, so every LP solution is a
//! truly feasible point and the objective never gets worse. σ is evaluated
//! with its own inner minimization over the auxiliary ζ, one per constraint.
//!
//! When the start point violates the true constraints, a single shared slack
//! `s ≥ 0` (penalized by `τ s`, capped at the current violation) is added to
//! every row until the iterate becomes feasible; `τ` grows geometrically.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus, RowSense, VarKind};
use crate::mdp::{DiscreteDistribution, Mdp};
use crate::risk::{sigma, RiskError, RiskMeasure, SigmaResult};
use crate::rng;

/// True-constraint residual under which an iterate counts as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DcpError {
    #[error("malformed program: {0}")]
    Shape(&'static str),
    #[error("pair (s={state}, a={action}) appears more than once")]
    DuplicatePair { state: usize, action: usize },
    #[error("state {0} has no constraint")]
    MissingState(usize),
    #[error("g2 failed at (s={state}, a={action}): {source}")]
    Risk {
        state: usize,
        action: usize,
        source: RiskError,
    },
    #[error("g2 is not convex at (s={state}, a={action}): midpoint gap {gap:e}")]
    NotConvex { state: usize, action: usize, gap: f64 },
    #[error("non-finite value at (s={state}, a={action})")]
    NonFinite { state: usize, action: usize },
    #[error("invalid solver settings: {0}")]
    Settings(&'static str),
    #[error("LP subproblem failed: {0}")]
    Lp(#[from] LpError),
    #[error("LP subproblem reported infeasibility at a feasible point")]
    SubproblemInfeasible,
}

/// `V(s) − c − ⟨λ, d⟩ − γσ(V, s, p) ≤ 0` for one `(s, α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcpConstraint {
    pub state: usize,
    pub action: usize,
    pub cost: f64,
    pub constraint_costs: Vec<f64>,
    pub successors: DiscreteDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcpProgram {
    pub n_states: usize,
    pub kappa0: Vec<f64>,
    pub beta: Vec<f64>,
    pub discount: f64,
    pub risk: RiskMeasure,
    pub constraints: Vec<DcpConstraint>,
}

/// Assignment of the decision variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcpPoint {
    pub v: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl DcpPoint {
    pub fn zeros(n_states: usize, n_constraints: usize) -> Self {
        Self {
            v: vec![0.0; n_states],
            lambda: vec![0.0; n_constraints],
        }
    }
}

impl DcpProgram {
    /// Builds the program from an MDP: one constraint per `(s, α)`.
    pub fn from_mdp(mdp: &Mdp, beta: Vec<f64>, risk: RiskMeasure) -> Result<Self, DcpError> {
        let mut constraints = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let successors = crate::mdp::successor_distribution(mdp, s, a)
                    .map_err(|_| DcpError::Shape("invalid transition row"))?;
                constraints.push(DcpConstraint {
                    state: s,
                    action: a,
                    cost: mdp.cost(s, a),
                    constraint_costs: (0..mdp.n_constraints())
                        .map(|i| mdp.constraint_cost(i, s, a))
                        .collect(),
                    successors,
                });
            }
        }
        let program = Self {
            n_states: mdp.n_states(),
            kappa0: mdp.initial_distribution().to_vec(),
            beta,
            discount: mdp.discount(),
            risk,
            constraints,
        };
        program.check()?;
        Ok(program)
    }

    pub fn n_constraints(&self) -> usize {
        self.beta.len()
    }

    /// Number of LP decision variables `|S| + n_c`.
    pub fn n_vars(&self) -> usize {
        self.n_states + self.n_constraints()
    }

    /// Structural checks plus randomized midpoint-convexity probes of `g2`.
    pub fn check(&self) -> Result<(), DcpError> {
        if self.kappa0.len() != self.n_states {
            return Err(DcpError::Shape("kappa0 length differs from |S|"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(DcpError::Shape("discount outside (0, 1)"));
        }
        self.risk
            .validate()
            .map_err(|_| DcpError::Shape("invalid risk measure"))?;
        let n_actions = self.constraints.iter().map(|c| c.action + 1).max().unwrap_or(0);
        let mut seen = vec![false; self.n_states * n_actions];
        for c in &self.constraints {
            if c.state >= self.n_states || c.successors.support().iter().any(|&j| j >= self.n_states)
            {
                return Err(DcpError::Shape("state index out of range"));
            }
            if c.constraint_costs.len() != self.beta.len() {
                return Err(DcpError::Shape("constraint cost count differs from budgets"));
            }
            if !c.cost.is_finite() || c.constraint_costs.iter().any(|d| !d.is_finite()) {
                return Err(DcpError::NonFinite {
                    state: c.state,
                    action: c.action,
                });
            }
            let k = c.state * n_actions + c.action;
            if seen[k] {
                return Err(DcpError::DuplicatePair {
                    state: c.state,
                    action: c.action,
                });
            }
            seen[k] = true;
        }
        for s in 0..self.n_states {
            if !(0..n_actions).any(|a| seen[s * n_actions + a]) {
                return Err(DcpError::MissingState(s));
            }
        }
        self.probe_convexity(0x5eed, 4)
    }

    /// Checks `g2((x+y)/2) ≤ (g2(x)+g2(y))/2` at `probes` random pairs per
    /// constraint.
    pub fn probe_convexity(&self, seed: u64, probes: usize) -> Result<(), DcpError> {
        let mut rng = rng::rng_from_seed(seed);
        for c in &self.constraints {
            let n = c.successors.len();
            for _ in 0..probes {
                let x: Vec<f64> = (0..n).map(|_| 20.0 * rng::uniform(&mut rng) - 10.0).collect();
                let y: Vec<f64> = (0..n).map(|_| 20.0 * rng::uniform(&mut rng) - 10.0).collect();
                let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
                let gx = self.g2_local(c, &x)?.value;
                let gy = self.g2_local(c, &y)?.value;
                let gm = self.g2_local(c, &mid)?.value;
                let gap = gm - 0.5 * (gx + gy);
                if gap > 1e-9 * (1.0 + gx.abs() + gy.abs()) {
                    return Err(DcpError::NotConvex {
                        state: c.state,
                        action: c.action,
                        gap,
                    });
                }
            }
        }
        Ok(())
    }

    fn g2_local(&self, c: &DcpConstraint, local: &[f64]) -> Result<SigmaResult, DcpError> {
        let mut r = sigma(&self.risk, local, &c.successors).map_err(|source| DcpError::Risk {
            state: c.state,
            action: c.action,
            source,
        })?;
        r.value *= self.discount;
        r.subgradient.iter_mut().for_each(|g| *g *= self.discount);
        Ok(r)
    }

    /// `g2(V) = γσ(V, s, p)` of constraint `k` with its subgradient (aligned
    /// with the successor support).
    pub fn g2(&self, k: usize, v: &[f64]) -> Result<SigmaResult, DcpError> {
        let c = &self.constraints[k];
        self.g2_local(c, &c.successors.gather(v))
    }

    /// `g1(λ) = c + ⟨λ, d⟩` of constraint `k`.
    pub fn g1(&self, k: usize, lambda: &[f64]) -> f64 {
        let c = &self.constraints[k];
        c.cost + c.constraint_costs.iter().zip(lambda).map(|(d, l)| d * l).sum::<f64>()
    }

    /// True (not linearized) residual `f1 − g1 − g2` of every constraint.
    pub fn residuals(&self, point: &DcpPoint) -> Result<Vec<f64>, DcpError> {
        (0..self.constraints.len())
            .map(|k| {
                let c = &self.constraints[k];
                let r = point.v[c.state] - self.g1(k, &point.lambda) - self.g2(k, &point.v)?.value;
                if r.is_finite() {
                    Ok(r)
                } else {
                    Err(DcpError::NonFinite {
                        state: c.state,
                        action: c.action,
                    })
                }
            })
            .collect()
    }

    pub fn max_residual(&self, point: &DcpPoint) -> Result<f64, DcpError> {
        Ok(self
            .residuals(point)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// `⟨κ0, V⟩ − ⟨λ, β⟩`, the negated DCP objective. For a feasible point
    /// this is a lower bound on the constrained optimum.
    pub fn bound(&self, point: &DcpPoint) -> f64 {
        let kv: f64 = self.kappa0.iter().zip(&point.v).map(|(k, v)| k * v).sum();
        let lb: f64 = point.lambda.iter().zip(&self.beta).map(|(l, b)| l * b).sum();
        kv - lb
    }

    /// LP obtained by replacing every `g2` with its tangent at `at`.
    ///
    /// Variables are `[V, λ]`, plus a trailing slack `s ∈ [0, cap]` with
    /// objective weight `τ` when `slack = Some((τ, cap))`.
    pub fn linearize_g2(
        &self,
        at: &DcpPoint,
        slack: Option<(f64, f64)>,
    ) -> Result<LinearProgram, DcpError> {
        let n_s = self.n_states;
        let n_c = self.n_constraints();
        let mut objective: Vec<f64> = self.kappa0.iter().map(|k| -k).collect();
        objective.extend_from_slice(&self.beta);
        let mut kinds = vec![VarKind::Free; n_s];
        kinds.extend(core::iter::repeat_n(VarKind::NonNegative, n_c));
        let slack_var = slack.map(|(tau, _)| {
            objective.push(tau);
            kinds.push(VarKind::NonNegative);
            n_s + n_c
        });
        let mut lp = LinearProgram::new(objective, kinds);
        for c in &self.constraints {
            let local = c.successors.gather(&at.v);
            let g = self.g2_local(c, &local)?;
            let offset = if self.risk.is_linear() {
                0.0
            } else {
                g.value - g.subgradient.iter().zip(&local).map(|(q, v)| q * v).sum::<f64>()
            };
            if !offset.is_finite() || g.subgradient.iter().any(|q| !q.is_finite()) {
                return Err(DcpError::NonFinite {
                    state: c.state,
                    action: c.action,
                });
            }
            let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(c.successors.len() + n_c + 2);
            coeffs.push((c.state, 1.0));
            for (&j, &q) in c.successors.support().iter().zip(&g.subgradient) {
                if q == 0.0 {
                    continue;
                }
                match coeffs.iter_mut().find(|(i, _)| *i == j) {
                    Some(e) => e.1 -= q,
                    None => coeffs.push((j, -q)),
                }
            }
            for (i, &d) in c.constraint_costs.iter().enumerate() {
                if d != 0.0 {
                    coeffs.push((n_s + i, -d));
                }
            }
            if let Some(sv) = slack_var {
                coeffs.push((sv, -1.0));
            }
            lp.add_row(coeffs, RowSense::Le, c.cost + offset);
        }
        let mut hint: Vec<f64> = at.v.iter().chain(&at.lambda).copied().collect();
        if let (Some(sv), Some((_, cap))) = (slack_var, slack) {
            lp.add_row(vec![(sv, 1.0)], RowSense::Le, cap);
            hint.push(cap);
        }
        lp.feasible_hint = Some(hint);
        Ok(lp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcpSettings {
    pub max_iterations: usize,
    /// Stop when the bound improves by less than `tolerance·(1 + |bound|)`.
    pub tolerance: f64,
    pub tau0: f64,
    pub mu: f64,
    pub tau_max: f64,
    /// Start point; `None` means `V = 0, λ = 0`.
    pub init: Option<DcpPoint>,
}

impl Default for CcpSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            tau0: 1.0,
            mu: 1.5,
            tau_max: 1e4,
            init: None,
        }
    }
}

impl CcpSettings {
    pub fn validate(&self) -> Result<(), DcpError> {
        if self.max_iterations == 0 {
            return Err(DcpError::Settings("max_iterations must be positive"));
        }
        if !(self.tolerance > 0.0 && self.tau0 > 0.0 && self.tau_max >= self.tau0) {
            return Err(DcpError::Settings("tolerance and penalties must be positive"));
        }
        if !(self.mu > 1.0) {
            return Err(DcpError::Settings("mu must exceed 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CcpStatus {
    Converged,
    /// Iteration budget exhausted; the best feasible iterate is returned.
    MaxIterations,
    /// The linearized program is unbounded along a truly feasible ray: the
    /// Lagrangian supremum is `+∞` and the constrained problem has no
    /// feasible policy.
    Unbounded,
    /// Slack never vanished; no feasible iterate was found.
    NoFeasiblePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// `⟨κ0, V⟩ − ⟨λ, β⟩` at the accepted iterate.
    pub bound: f64,
    /// `⟨λ, β⟩ − ⟨κ0, V⟩ + τ·max(residual, 0)`, with the `τ` of this step.
    pub penalized_objective: f64,
    pub max_residual: f64,
    pub tau: f64,
    pub lp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcpSolution {
    pub status: CcpStatus,
    pub point: DcpPoint,
    pub bound: f64,
    /// True residuals of every constraint at `point`.
    pub residuals: Vec<f64>,
    /// Every true constraint holds within [`FEASIBILITY_TOL`].
    pub feasible: bool,
    pub trace: Vec<TraceRow>,
    /// Improving direction `(V, λ)` when `status == Unbounded`.
    pub ray: Option<DcpPoint>,
}

/// Penalty convex-concave procedure over a sequence of LPs.
pub fn ccp_solve(program: &DcpProgram, settings: &CcpSettings) -> Result<CcpSolution, DcpError> {
    settings.validate()?;
    let n_s = program.n_states;
    let n_c = program.n_constraints();
    let mut point = match &settings.init {
        Some(p) => {
            if p.v.len() != n_s || p.lambda.len() != n_c {
                return Err(DcpError::Shape("initial point has wrong dimensions"));
            }
            let mut p = p.clone();
            p.lambda.iter_mut().for_each(|l| *l = l.max(0.0));
            p
        }
        None => DcpPoint::zeros(n_s, n_c),
    };
    let mut residual = program.max_residual(&point)?;
    let mut bound = program.bound(&point);
    let mut best: Option<(DcpPoint, f64)> =
        (residual <= FEASIBILITY_TOL).then(|| (point.clone(), bound));
    let mut tau = settings.tau0;
    let mut trace = Vec::new();
    let mut status = CcpStatus::MaxIterations;
    let mut ray = None;

    for iteration in 1..=settings.max_iterations {
        let infeasible = residual > FEASIBILITY_TOL;
        let slack = infeasible.then_some((tau, residual));
        let lp = program.linearize_g2(&point, slack)?;
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(DcpError::SubproblemInfeasible),
            LpStatus::Unbounded => {
                ray = sol.certificate.map(|d| DcpPoint {
                    v: d[..n_s].to_vec(),
                    lambda: d[n_s..n_s + n_c].to_vec(),
                });
                status = CcpStatus::Unbounded;
                break;
            }
        }
        let candidate = DcpPoint {
            v: sol.x[..n_s].to_vec(),
            lambda: sol.x[n_s..n_s + n_c].iter().map(|l| l.max(0.0)).collect(),
        };
        let new_residual = program.max_residual(&candidate)?;
        let new_bound = program.bound(&candidate);
        let pen_old = -bound + tau * residual.max(0.0);
        let pen_new = -new_bound + tau * new_residual.max(0.0);
        let scale = 1.0 + bound.abs();
        let worse_residual = new_residual > residual.max(0.0) + FEASIBILITY_TOL;
        let worse_objective = pen_new > pen_old + 1e-9 * scale;
        if worse_residual || worse_objective {
            // Linearization error beyond tolerance: tighten and retry, or stop
            // at the current iterate once τ is saturated.
            if tau < settings.tau_max && infeasible {
                tau = (tau * settings.mu).min(settings.tau_max);
                continue;
            }
            if !infeasible {
                status = CcpStatus::Converged;
                break;
            }
            continue;
        }
        trace.push(TraceRow {
            iteration,
            bound: new_bound,
            penalized_objective: pen_new,
            max_residual: new_residual,
            tau,
            lp_iterations: sol.diagnostics.iterations,
        });
        let improvement = new_bound - bound;
        point = candidate;
        residual = new_residual;
        bound = new_bound;
        if residual <= FEASIBILITY_TOL {
            if best.as_ref().is_none_or(|(_, b)| bound >= *b) {
                best = Some((point.clone(), bound));
            }
            let exact = program.risk.is_linear();
            if (!infeasible && (exact || improvement.abs() <= settings.tolerance * scale))
                || (exact && infeasible)
            {
                if exact && infeasible {
                    // One more pass without slack makes the linear case exact.
                    continue;
                }
                status = CcpStatus::Converged;
                break;
            }
        }
        tau = (tau * settings.mu).min(settings.tau_max);
    }

    if status == CcpStatus::Unbounded {
        let residuals = program.residuals(&point)?;
        let feasible = residuals.iter().all(|&r| r <= FEASIBILITY_TOL);
        return Ok(CcpSolution {
            status,
            bound: f64::INFINITY,
            point,
            residuals,
            feasible,
            trace,
            ray,
        });
    }
    let (point, status) = match (status, best) {
        (CcpStatus::Converged, _) => (point, status),
        (_, Some((p, _))) => (p, CcpStatus::MaxIterations),
        (_, None) => (point, CcpStatus::NoFeasiblePoint),
    };
    let residuals = program.residuals(&point)?;
    let feasible = residuals.iter().all(|&r| r <= FEASIBILITY_TOL);
    Ok(CcpSolution {
        status,
        bound: program.bound(&point),
        point,
        residuals,
        feasible,
        trace,
        ray: None,
    })
}
