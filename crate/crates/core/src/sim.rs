//! Seeded Monte Carlo simulation and failure-rate accounting.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{build_gridworld, perturb_obstacles, GridConfig, GridError};
use crate::mdp::{Mdp, Policy};
use crate::rng;

pub const DEFAULT_MAX_STEPS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `s_0, …, s_T`.
    pub states: Vec<usize>,
    /// `α_0, …, α_{T−1}`.
    pub actions: Vec<usize>,
    pub objective_costs: Vec<f64>,
    /// `constraint_costs[t][i] = d^i(s_t, α_t)`.
    pub constraint_costs: Vec<Vec<f64>>,
    /// `collisions[t]`: the move at step `t` entered a hazard cell.
    pub collisions: Vec<bool>,
    pub discounted_objective: f64,
    pub discounted_constraints: Vec<f64>,
    /// Stopped in a zero-cost absorbing state.
    pub absorbed: bool,
    /// Stopped by the step limit.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn collided(&self) -> bool {
        self.collisions.iter().any(|&c| c)
    }

    pub fn first_collision(&self) -> Option<usize> {
        self.collisions.iter().position(|&c| c)
    }

    /// Recomputes the discounted sums from the step records.
    pub fn recompute_discounted(&self, discount: f64) -> (f64, Vec<f64>) {
        let mut w = 1.0;
        let mut obj = 0.0;
        let mut cons = vec![0.0; self.discounted_constraints.len()];
        for (c, d) in self.objective_costs.iter().zip(&self.constraint_costs) {
            obj += w * c;
            for (acc, di) in cons.iter_mut().zip(d) {
                *acc += w * di;
            }
            w *= discount;
        }
        (obj, cons)
    }
}

/// States whose every action stays put at zero cost; reaching one ends a run
/// since nothing further can accrue.
pub fn terminal_states(mdp: &Mdp) -> Vec<bool> {
    (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions()).all(|a| {
                let row = mdp.transition_row(s, a);
                row.iter().all(|&(j, p)| j == s || p == 0.0)
                    && mdp.cost(s, a) == 0.0
                    && (0..mdp.n_constraints()).all(|i| mdp.constraint_cost(i, s, a) == 0.0)
            })
        })
        .collect()
}

/// Simulates `policy` from `s_0 ∼ κ0` for at most `max_steps` moves.
/// `hazards[s]` marks cells whose entry counts as a collision.
pub fn simulate_with<R: Rng + ?Sized>(
    mdp: &Mdp,
    policy: &Policy,
    rng: &mut R,
    max_steps: usize,
    hazards: Option<&[bool]>,
) -> Trajectory {
    let terminal = terminal_states(mdp);
    simulate_inner(mdp, policy, rng, max_steps, hazards, &terminal)
}

fn simulate_inner<R: Rng + ?Sized>(
    mdp: &Mdp,
    policy: &Policy,
    rng: &mut R,
    max_steps: usize,
    hazards: Option<&[bool]>,
    terminal: &[bool],
) -> Trajectory {
    let n_c = mdp.n_constraints();
    let kappa: Vec<(usize, f64)> = mdp
        .initial_distribution()
        .iter()
        .copied()
        .enumerate()
        .collect();
    let mut s = rng::sample_pairs(rng, &kappa);
    let mut t = Trajectory {
        states: vec![s],
        actions: Vec::new(),
        objective_costs: Vec::new(),
        constraint_costs: Vec::new(),
        collisions: Vec::new(),
        discounted_objective: 0.0,
        discounted_constraints: vec![0.0; n_c],
        absorbed: false,
        truncated: false,
    };
    let gamma = mdp.discount();
    let mut w = 1.0;
    loop {
        if terminal[s] {
            t.absorbed = true;
            break;
        }
        if t.actions.len() >= max_steps {
            t.truncated = true;
            break;
        }
        let a = policy.action(s);
        let c = mdp.cost(s, a);
        let d: Vec<f64> = (0..n_c).map(|i| mdp.constraint_cost(i, s, a)).collect();
        t.discounted_objective += w * c;
        for (acc, di) in t.discounted_constraints.iter_mut().zip(&d) {
            *acc += w * di;
        }
        w *= gamma;
        let next = rng::sample_pairs(rng, mdp.transition_row(s, a));
        t.actions.push(a);
        t.objective_costs.push(c);
        t.constraint_costs.push(d);
        t.collisions.push(hazards.is_some_and(|h| h[next]));
        t.states.push(next);
        s = next;
    }
    t
}

/// Simulation with a fresh ChaCha8 stream for `seed`; no hazard tracking.
pub fn simulate(mdp: &Mdp, policy: &Policy, seed: u64, max_steps: usize) -> Trajectory {
    let mut rng = rng::rng_from_seed(seed);
    simulate_with(mdp, policy, &mut rng, max_steps, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub steps: usize,
    pub collided: bool,
    pub first_collision: Option<usize>,
    pub reached_goal: bool,
    pub truncated: bool,
    pub discounted_objective: f64,
    pub discounted_constraints: Vec<f64>,
    /// Uncertain obstacles that moved in this run's map.
    pub moved_obstacles: usize,
}

impl RunSummary {
    pub fn from_trajectory(run: usize, t: &Trajectory, moved_obstacles: usize) -> Self {
        Self {
            run,
            steps: t.len(),
            collided: t.collided(),
            first_collision: t.first_collision(),
            reached_goal: t.absorbed,
            truncated: t.truncated,
            discounted_objective: t.discounted_objective,
            discounted_constraints: t.discounted_constraints.clone(),
            moved_obstacles,
        }
    }
}

/// Seeds of run `run`: (perturbation, simulation).
pub fn run_seeds(seed: u64, run: usize) -> (u64, u64) {
    let r = run as u64;
    (rng::derive_seed(seed, 2 * r), rng::derive_seed(seed, 2 * r + 1))
}

/// One robustness run: perturb the uncertain obstacles, rebuild the MDP and
/// simulate `policy` on it, counting entries into any obstacle of the
/// perturbed map.
pub fn grid_run(
    grid: &GridConfig,
    policy: &Policy,
    perturb_prob: f64,
    seed: u64,
    run: usize,
    max_steps: usize,
) -> Result<RunSummary, GridError> {
    let (perturb_seed, sim_seed) = run_seeds(seed, run);
    let map = perturb_obstacles(grid, perturb_prob, perturb_seed);
    let moved = map
        .uncertain_obstacles
        .iter()
        .zip(&grid.uncertain_obstacles)
        .filter(|(a, b)| a != b)
        .count();
    let mdp = build_gridworld(&map)?;
    let hazards = map.obstacle_mask();
    let mut rng = rng::rng_from_seed(sim_seed);
    let t = simulate_with(&mdp, policy, &mut rng, max_steps, Some(&hazards));
    Ok(RunSummary::from_trajectory(run, &t, moved))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
    pub min: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                min: f64::NAN,
                q05: f64::NAN,
                median: f64::NAN,
                q95: f64::NAN,
                max: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        // Linear interpolation between order statistics.
        let q = |p: f64| {
            let h = p * (n - 1) as f64;
            let lo = libm::floor(h) as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        };
        Self {
            mean,
            std_error: libm::sqrt(var / n as f64),
            min: sorted[0],
            q05: q(0.05),
            median: q(0.5),
            q95: q(0.95),
            max: sorted[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub width: usize,
    pub height: usize,
    pub measure: alloc::string::String,
    pub epsilon: Option<f64>,
    pub budgets: Vec<f64>,
    pub uncertain_obstacles: usize,
    pub perturb_prob: f64,
    pub seed: u64,
    pub max_steps: usize,
    /// Planner value for the Table-1 column: the certified lower bound.
    pub bound: Option<f64>,
    pub solve_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metadata: ReportMetadata,
    pub runs: usize,
    /// Fraction of runs with at least one collision.
    pub failure_rate: f64,
    pub goal_rate: f64,
    pub truncated_runs: usize,
    pub objective: Summary,
    pub constraints: Vec<Summary>,
    pub per_run: Vec<RunSummary>,
}

impl EvaluationReport {
    /// Aggregates runs; the result does not depend on the order of `runs`
    /// because they are sorted by run index first.
    pub fn aggregate(metadata: ReportMetadata, mut runs: Vec<RunSummary>) -> Self {
        runs.sort_by_key(|r| r.run);
        let n = runs.len();
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let objective: Vec<f64> = runs.iter().map(|r| r.discounted_objective).collect();
        let n_c = runs.first().map_or(0, |r| r.discounted_constraints.len());
        let constraints = (0..n_c)
            .map(|i| {
                let v: Vec<f64> = runs.iter().map(|r| r.discounted_constraints[i]).collect();
                Summary::of(&v)
            })
            .collect();
        Self {
            metadata,
            runs: n,
            failure_rate: frac(runs.iter().filter(|r| r.collided).count()),
            goal_rate: frac(runs.iter().filter(|r| r.reached_goal).count()),
            truncated_runs: runs.iter().filter(|r| r.truncated).count(),
            objective: Summary::of(&objective),
            constraints,
            per_run: runs,
        }
    }
}

/// Sequential Monte Carlo report; the std companion crate runs the same
/// per-run function in parallel.
pub fn monte_carlo_report(
    grid: &GridConfig,
    policy: &Policy,
    runs: usize,
    perturb_prob: f64,
    seed: u64,
    max_steps: usize,
    metadata: ReportMetadata,
) -> Result<EvaluationReport, GridError> {
    let per_run = (0..runs)
        .map(|r| grid_run(grid, policy, perturb_prob, seed, r, max_steps))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvaluationReport::aggregate(metadata, per_run))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;

    fn chain() -> Mdp {
        // 0 → 1 → 2 → 3 (absorbing goal).
        let mut rows = Vec::new();
        for s in 0..4usize {
            rows.push(vec![((s + 1).min(3), 1.0)]);
        }
        Mdp::new(
            4,
            1,
            rows,
            vec![1.0, 1.0, 1.0, 0.0],
            vec![vec![2.0, 2.0, 2.0, 0.0]],
            vec![1.0, 0.0, 0.0, 0.0],
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_chain_runs_to_the_goal() {
        let t = simulate(&chain(), &Policy(vec![0; 4]), 1, 100);
        assert_eq!(t.states, vec![0, 1, 2, 3]);
        assert_eq!(t.len(), 3);
        assert!(t.absorbed && !t.truncated && !t.collided());
        assert!((t.discounted_objective - 1.75).abs() < 1e-15);
        assert!((t.discounted_constraints[0] - 3.5).abs() < 1e-15);
        let (o, c) = t.recompute_discounted(0.5);
        assert_eq!(o, t.discounted_objective);
        assert_eq!(c, t.discounted_constraints);
    }

    #[test]
    fn truncation_is_flagged() {
        let t = simulate(&chain(), &Policy(vec![0; 4]), 1, 2);
        assert!(t.truncated);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let g = crate::grid::generate_grid(&crate::grid::GridSpec::paper(10)).unwrap();
        let mdp = build_gridworld(&g).unwrap();
        let pi = Policy::uniform(mdp.n_states(), 5);
        assert_eq!(simulate(&mdp, &pi, 11, 50), simulate(&mdp, &pi, 11, 50));
    }

    #[test]
    fn collisions_are_counted_on_entry() {
        let mut g = GridConfig::open(3, 1);
        g.goal = Cell::new(0, 0);
        g.start = Cell::new(2, 0);
        g.obstacles = vec![Cell::new(1, 0)];
        g.slip = crate::grid::SlipModel::DETERMINISTIC;
        let west = Policy::uniform(3, crate::grid::Action::W.index());
        let r = grid_run(&g, &west, 0.0, 3, 0, 10).unwrap();
        assert!(r.collided);
        assert_eq!(r.first_collision, Some(0));
        assert!(r.reached_goal);
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 4.0);
        let one = Summary::of(&[7.0]);
        assert_eq!((one.mean, one.std_error, one.q95), (7.0, 0.0, 7.0));
    }
}
