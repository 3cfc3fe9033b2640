//! The eight acceptance criteria, run in order in a single test so that the
//! wall-clock checks are not disturbed by other tests. Each criterion prints
//! one PASS/FAIL line; the test fails if any criterion does.

use std::io::Write as _;
use std::time::Instant;

use riskmdp::evaluate::{parallel_report, DEFAULT_MAX_STEPS};
use riskmdp_core::bellman::{policy_risk_evaluation, risk_value_iteration};
use riskmdp_core::dcp::{ccp_solve, CcpSettings};
use riskmdp_core::grid::{generate_grid, GridSpec};
use riskmdp_core::mdp::CostTable;
use riskmdp_core::oracle::enumerate_policies;
use riskmdp_core::planner::{assemble_program, solve_expectation_lp, PlanStatus};
use riskmdp_core::random::{random_mdp, RandomMdpSpec};
use riskmdp_core::risk::sigma_slices;
use riskmdp_core::sim::{simulate, ReportMetadata, Summary};
use riskmdp_core::{
    brute_force_constrained_optimum, build_gridworld, plan, rng, GridConfig, LpStatus, Mdp, PlanResult,
    PlannerConfig, Policy, RiskMeasure,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(k: usize, name: &str, o: &Outcome, seconds: f64) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    // Straight to the stream so the lines survive libtest's output capture.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {k} ({name}): {verdict} [{seconds:.2} s] {}", o.detail);
}

fn measures(eps: f64) -> [RiskMeasure; 3] {
    [
        RiskMeasure::Expectation,
        RiskMeasure::Cvar { epsilon: eps },
        RiskMeasure::Evar { epsilon: eps },
    ]
}

fn sigma(risk: &RiskMeasure, v: &[f64], p: &[f64]) -> f64 {
    sigma_slices(risk, v, p).unwrap().value
}

struct Fixture {
    v: Vec<f64>,
    w: Vec<f64>,
    p: Vec<f64>,
    eps: f64,
}

fn fixture(seed: u64) -> Fixture {
    let mut r = rng::rng_from_seed(seed);
    let n = 1 + rng::index(&mut r, 8);
    let mut draw = |lo: f64, hi: f64| lo + (hi - lo) * rng::uniform(&mut r);
    let v: Vec<f64> = (0..n).map(|_| draw(-10.0, 10.0)).collect();
    let w: Vec<f64> = (0..n).map(|_| draw(-10.0, 10.0)).collect();
    let raw: Vec<f64> = (0..n).map(|_| draw(0.01, 1.0)).collect();
    let eps = draw(0.01, 1.0);
    let total: f64 = raw.iter().sum();
    Fixture {
        v,
        w,
        p: raw.into_iter().map(|x| x / total).collect(),
        eps,
    }
}

const FIXTURES: u64 = 1000;

fn criterion_1() -> Outcome {
    let tol = 1e-8;
    let mut failures = Vec::new();
    for seed in 0..FIXTURES {
        let f = fixture(seed);
        let mut r = rng::rng_from_seed(10_000 + seed);
        let theta = rng::uniform(&mut r);
        let c = 10.0 * rng::uniform(&mut r) - 5.0;
        let scale = 4.0 * rng::uniform(&mut r);
        let bump: Vec<f64> = f.v.iter().map(|_| 5.0 * rng::uniform(&mut r)).collect();
        let mix: Vec<f64> = f.v.iter().zip(&f.w).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        let bigger: Vec<f64> = f.v.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let moved: Vec<f64> = f.v.iter().map(|a| a + c).collect();
        let scaled: Vec<f64> = f.v.iter().map(|a| scale * a).collect();
        for risk in measures(f.eps) {
            let sv = sigma(&risk, &f.v, &f.p);
            let sw = sigma(&risk, &f.w, &f.p);
            let checks = [
                ("convexity", sigma(&risk, &mix, &f.p) - (theta * sv + (1.0 - theta) * sw)),
                ("monotonicity", sv - sigma(&risk, &bigger, &f.p)),
                ("translation", (sigma(&risk, &moved, &f.p) - (sv + c)).abs()),
                ("homogeneity", (sigma(&risk, &scaled, &f.p) - scale * sv).abs()),
            ];
            for (axiom, excess) in checks {
                if excess > tol {
                    failures.push(format!("seed {seed} {risk} {axiom} {excess:e}"));
                }
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!("{FIXTURES} fixtures x 3 measures x 4 axioms, {} violations {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()),
    }
}

fn criterion_2() -> Outcome {
    let mut failures = 0;
    for seed in 0..FIXTURES {
        let f = fixture(seed);
        let [e, c, v] = measures(f.eps).map(|r| sigma(&r, &f.v, &f.p));
        if !(e <= c + 1e-8 && c <= v + 1e-8) {
            failures += 1;
        }
    }
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let f = fixture(50_000 + seed);
        let max = f.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((sigma(&RiskMeasure::Evar { epsilon: 1e-6 }, &f.v, &f.p) - max).abs());
    }
    Outcome {
        pass: failures == 0 && worst <= 1e-3,
        detail: format!("ordering violations {failures}/{FIXTURES}; max |EVaR_1e-6 - max v| = {worst:.3e}"),
    }
}

/// Random instance with 2-6 states and 2-3 actions.
fn instance(seed: u64) -> Mdp {
    let n_s = 2 + (seed % 5) as usize;
    let n_a = 2 + ((seed / 5) % 2) as usize;
    random_mdp(&RandomMdpSpec::small(n_s, n_a), seed).unwrap()
}

/// Budget a fraction `t` of the way between the smallest and largest
/// constraint value over deterministic policies.
fn budget_between(mdp: &Mdp, risk: &RiskMeasure, t: f64) -> f64 {
    let d: Vec<f64> = enumerate_policies(mdp, risk).unwrap().iter().map(|e| e.constraints[0]).collect();
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo + t * (hi - lo)).max(1e-3)
}

fn criterion_3() -> Outcome {
    let mut worst_lp = 0.0f64;
    let mut worst_oracle = 0.0f64;
    let mut det_below = 0;
    let mut det_equal = 0;
    let mut bad = Vec::new();
    for seed in 0..50 {
        let mdp = instance(1000 + seed);
        let t = 0.1 + 0.8 * rng::uniform(&mut rng::rng_from_seed(seed));
        let beta = budget_between(&mdp, &RiskMeasure::Expectation, t);
        let cfg = PlannerConfig::new(RiskMeasure::Expectation, vec![beta]);
        let lp = solve_expectation_lp(&mdp, &[beta]).unwrap();
        let ccp = ccp_solve(&assemble_program(&mdp, &cfg).unwrap(), &CcpSettings::default()).unwrap();
        let oracle = brute_force_constrained_optimum(&mdp, &cfg).unwrap();
        if lp.status != LpStatus::Optimal || !ccp.feasible {
            bad.push(seed);
            continue;
        }
        worst_lp = worst_lp.max((ccp.bound - lp.objective).abs());
        match oracle.randomized_value {
            Some(r) => worst_oracle = worst_oracle.max((lp.objective - r).abs()),
            None => bad.push(seed),
        }
        if let Some(d) = oracle.value() {
            if d < lp.objective - 1e-6 {
                det_below += 1;
            }
            if (d - lp.objective).abs() <= 1e-5 {
                det_equal += 1;
            }
        }
    }
    Outcome {
        pass: bad.is_empty() && worst_lp <= 1e-6 && worst_oracle <= 1e-5 && det_below == 0,
        detail: format!(
            "50 MDPs: max |CCP - LP| = {worst_lp:.2e}, max |LP - randomized oracle| = {worst_oracle:.2e}, \
             deterministic oracle equal on {det_equal}/50 and never below the LP ({det_below}); failures {bad:?}"
        ),
    }
}

fn criterion_4() -> Outcome {
    let mut violations = Vec::new();
    let mut certified = 0;
    let mut infeasible = 0;
    let mut gaps = Vec::new();
    for eps in [0.15, 0.5] {
        for risk in [RiskMeasure::Cvar { epsilon: eps }, RiskMeasure::Evar { epsilon: eps }] {
            for seed in 0..30 {
                let mdp = instance(2000 + seed);
                let t = rng::uniform(&mut rng::rng_from_seed(7 + seed));
                let beta = budget_between(&mdp, &risk, t);
                let cfg = PlannerConfig::new(risk, vec![beta]);
                let r = plan(&mdp, &cfg).unwrap();
                let best = brute_force_constrained_optimum(&mdp, &cfg).unwrap().value();
                match (r.status, r.lower_bound, best) {
                    (PlanStatus::Certified, Some(lb), Some(opt)) => {
                        certified += 1;
                        gaps.push(opt - lb);
                        if lb > opt + 1e-6 {
                            violations.push(format!("{risk} seed {seed}: {lb} > {opt}"));
                        }
                    }
                    (PlanStatus::Infeasible, _, Some(opt)) => {
                        violations.push(format!("{risk} seed {seed}: infeasible claimed, optimum {opt}"));
                    }
                    (PlanStatus::Infeasible, _, None) => infeasible += 1,
                    (PlanStatus::Certified, _, None) => certified += 1,
                    (status, ..) => violations.push(format!("{risk} seed {seed}: {status:?}")),
                }
            }
        }
    }
    let s = Summary::of(&gaps);
    Outcome {
        pass: violations.is_empty(),
        detail: format!(
            "120 instances: {certified} certified, {infeasible} certified infeasible, {} violations {:?}; \
             gap oracle - bound median {:.3}, max {:.3}",
            violations.len(),
            violations.iter().take(3).collect::<Vec<_>>(),
            s.median,
            s.max
        ),
    }
}

/// Sup-norm steps are differences of values of size `‖V‖`, so each carries
/// roundoff of a few ulps of `‖V‖`. The ratio test uses the steps that are
/// large enough for that noise to stay below 1e-10 in the ratio; every step
/// must still contract up to 1e-14·‖V‖.
fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut failures = 0;
    let mut raw = 0;
    let mut worst_excess = 0.0f64;
    for seed in 0..20 {
        let mdp = instance(3000 + seed);
        let g = mdp.discount();
        let lambda = [rng::uniform(&mut rng::rng_from_seed(seed)) * 2.0];
        for risk in measures(0.2) {
            let vi = risk_value_iteration(&mdp, &lambda, &risk, 1e-10).unwrap();
            let scale = vi.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for w in vi.steps.windows(2) {
                if w[1] > (g + 1e-9) * w[0] {
                    raw += 1;
                }
                worst_excess = worst_excess.max((w[1] - g * w[0]) / scale);
                if w[1] > g * w[0] + 1e-14 * scale {
                    failures += 1;
                }
                if w[0] >= 1e-5 * scale {
                    checked += 1;
                    worst = worst.max(w[1] / w[0]);
                    if w[1] > (g + 1e-9) * w[0] {
                        failures += 1;
                    }
                }
            }
        }
    }
    Outcome {
        pass: failures == 0,
        detail: format!(
            "20 instances x 3 measures: worst ratio {worst:.12} over {checked} steps above the roundoff floor (gamma 0.9); \
             max excess over gamma*step {worst_excess:.1e}*|V|; {raw} ratio excursions below the floor; {failures} violations"
        ),
    }
}

const SIZES: [(usize, f64); 3] = [(10, 50.0), (15, 10.0), (20, 200.0)];
/// Table 1 solve times in seconds, per size, for E, CVaR and EVaR.
const PAPER_SECONDS: [[f64; 3]; 3] = [[0.7, 5.4, 3.2], [1.0, 8.3, 4.9], [1.6, 10.5, 6.6]];

struct GridPlans {
    size: usize,
    beta: f64,
    grid: GridConfig,
    plans: Vec<(RiskMeasure, PlanResult, f64)>,
}

fn solve_grids(step_cost: f64) -> Vec<GridPlans> {
    SIZES
        .iter()
        .map(|&(size, beta)| {
            let mut grid = generate_grid(&GridSpec::paper(size)).unwrap();
            grid.step_cost = step_cost;
            let mdp = build_gridworld(&grid).unwrap();
            let plans = measures(0.15)
                .into_iter()
                .map(|risk| {
                    let t = Instant::now();
                    let r = plan(&mdp, &PlannerConfig::new(risk, vec![beta])).unwrap();
                    (risk, r, t.elapsed().as_secs_f64())
                })
                .collect();
            GridPlans {
                size,
                beta,
                grid,
                plans,
            }
        })
        .collect()
}

/// Planner value for the ordering check: the certified bound, or +∞ for a
/// certified-infeasible problem.
fn value(r: &PlanResult) -> Option<f64> {
    match r.status {
        PlanStatus::Certified => r.lower_bound,
        PlanStatus::Infeasible => Some(f64::INFINITY),
        PlanStatus::NoCertifiedPlan => None,
    }
}

fn criterion_6(variants: &[(&str, Vec<GridPlans>)]) -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, grids) in variants {
        for (i, g) in grids.iter().enumerate() {
            let mut cells = Vec::new();
            let mut values = Vec::new();
            for (k, (risk, r, secs)) in g.plans.iter().enumerate() {
                let limit = 10.0 * PAPER_SECONDS[i][k];
                let v = value(r);
                pass &= v.is_some() && *secs < limit;
                values.push(v.unwrap_or(f64::NAN));
                cells.push(format!("{}={} ({:.2}s/{:.0}s)", risk.name(), fmt(v), secs, limit));
            }
            let ordered = values[0] <= values[1] + 1e-6 || values[0] == values[1];
            let ordered = ordered && (values[1] <= values[2] + 1e-6 || values[1] == values[2]);
            pass &= ordered;
            lines.push(format!("{name} {0}x{0} beta={1}: {2} ordered={ordered}", g.size, g.beta, cells.join(", ")));
        }
    }
    Outcome {
        pass,
        detail: format!("\n    {}", lines.join("\n    ")),
    }
}

fn fmt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_infinite() => "infeasible".into(),
        Some(x) => format!("{x:.4}"),
        None => "none".into(),
    }
}

fn criterion_7(variants: &[(&str, Vec<GridPlans>)]) -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, grids) in variants {
        for g in grids {
            let mut ordered = 0;
            let mut rates = [0.0; 3];
            for rep in 0..10u64 {
                let fr: Vec<f64> = g
                    .plans
                    .iter()
                    .map(|(risk, r, _)| {
                        let md = ReportMetadata {
                            width: g.size,
                            height: g.size,
                            measure: risk.name().into(),
                            epsilon: risk.epsilon(),
                            budgets: vec![g.beta],
                            uncertain_obstacles: g.grid.uncertain_obstacles.len(),
                            perturb_prob: 0.2,
                            seed: rep,
                            max_steps: DEFAULT_MAX_STEPS,
                            bound: r.lower_bound,
                            solve_seconds: None,
                        };
                        parallel_report(&g.grid, &r.policy, 100, 0.2, 1000 + rep, DEFAULT_MAX_STEPS, md, None)
                            .unwrap()
                            .failure_rate
                    })
                    .collect();
                for k in 0..3 {
                    rates[k] += fr[k] / 10.0;
                }
                if fr[2] <= fr[1] && fr[1] <= fr[0] {
                    ordered += 1;
                }
            }
            pass &= ordered >= 8;
            lines.push(format!(
                "{name} {0}x{0}: ordered in {ordered}/10, mean FR E={1:.3} CVaR={2:.3} EVaR={3:.3}",
                g.size, rates[0], rates[1], rates[2]
            ));
        }
    }
    Outcome {
        pass,
        detail: format!("\n    {}", lines.join("\n    ")),
    }
}

fn criterion_8() -> Outcome {
    let mdp = random_mdp(&RandomMdpSpec::small(2, 2), 8).unwrap();
    let policy = Policy(vec![1, 0]);
    let exact =
        policy_risk_evaluation(&mdp, &policy, CostTable::Objective, &RiskMeasure::Expectation, 1e-13).unwrap();
    let runs = 100_000u64;
    // γ^400 < 1e-18: truncation does not bias the estimate.
    let samples: Vec<f64> = (0..runs)
        .map(|r| simulate(&mdp, &policy, rng::derive_seed(88, r), 400).discounted_objective)
        .collect();
    let s = Summary::of(&samples);
    let z = (s.mean - exact) / s.std_error;
    Outcome {
        pass: z.abs() <= 3.0,
        detail: format!("{runs} runs: mean {:.5}, exact {exact:.5}, SE {:.5}, z = {z:.2}", s.mean, s.std_error),
    }
}

#[test]
fn acceptance_criteria() {
    let mut all = true;
    let mut run = |k: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        report(k, name, &o, t.elapsed().as_secs_f64());
        all &= o.pass;
    };
    run(1, "coherence axioms", &mut criterion_1);
    run(2, "risk ordering", &mut criterion_2);
    run(3, "expectation LP equivalence", &mut criterion_3);
    run(4, "lower-bound soundness", &mut criterion_4);
    run(5, "contraction", &mut criterion_5);

    let variants = vec![("step_cost=0", solve_grids(0.0)), ("step_cost=2", solve_grids(2.0))];
    run(6, "grid-world pipeline", &mut || criterion_6(&variants));
    run(7, "robustness trend", &mut || criterion_7(&variants));
    run(8, "Monte Carlo consistency", &mut criterion_8);
    assert!(all, "at least one acceptance criterion failed; see the lines above");
}
