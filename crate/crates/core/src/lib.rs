//! Policy synthesis for finite Markov decision processes whose objective and
//! budget constraints are nested (dynamic) coherent risk measures.
//!
//! The crate is `no_std` + `alloc`. It contains the numerical pieces only:
//!
//! * [`mdp`]: the MDP data model and its validation.
//! * [`grid`]: the rover grid-world family and obstacle perturbation.
//! * [`risk`]: one-step risk transition maps (expectation, CVaR, EVaR) with
//!   subgradients.
//! * [`lp`]: a dense revised simplex solver.
//! * [`dcp`]: difference-of-convex programs and the penalty convex-concave
//!   procedure that solves them through a sequence of LPs.
//! * [`planner`]: Lagrangian Bellman-inequality programs, greedy policy
//!   extraction and the certified lower bound.
//! * [`bellman`]: risk value iteration and fixed-policy risk evaluation.
//! * [`oracle`]: brute-force policy enumeration for small instances, and
//!   [`random`] instances to feed it.
//! * [`sim`]: seeded Monte Carlo simulation and failure-rate accounting.
//!
//! File formats, rendering and the command-line driver live in the companion
//! `riskmdp` crate.

#![no_std]
// `!(x <= tol)` is how NaN gets rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bellman;
pub mod dcp;
pub mod grid;
pub mod lp;
pub mod mdp;
pub mod oracle;
pub mod planner;
pub mod random;
pub mod risk;
pub mod rng;
pub mod sim;

pub use bellman::{policy_risk_evaluation, risk_value_iteration};
pub use dcp::{ccp_solve, CcpSettings, CcpSolution, DcpProgram};
pub use grid::{build_gridworld, perturb_obstacles, Action, Cell, GridConfig};
pub use lp::{solve_lp, LinearProgram, LpSolution, LpStatus};
pub use mdp::{validate_mdp, DiscreteDistribution, Mdp, Policy};
pub use oracle::brute_force_constrained_optimum;
pub use planner::{extract_policy, plan, PlanResult, PlannerConfig};
pub use risk::{sigma, RiskMeasure, SigmaResult};
pub use sim::{simulate, Trajectory};
