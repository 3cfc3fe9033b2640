//! One-step coherent risk transition maps `σ(v, p)` and their subgradients.
//!
//! Every evaluator takes successor values `v` aligned with successor
//! probabilities `p` and returns the risk value together with a subgradient
//! `g = ∂σ/∂v`. For the three measures here `g` is a maximizer of the dual
//! representation `σ(v) = sup_{q ∈ Q(p)} ⟨q, v⟩`, so it is a probability
//! vector and `σ(v) = ⟨g, v⟩`.
//!
//! Zero-probability atoms never contribute: they receive a zero subgradient
//! entry and are skipped inside the log-sum-exp.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::DiscreteDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RiskError {
    #[error("values ({values}) and probabilities ({probabilities}) differ in length")]
    LengthMismatch { values: usize, probabilities: usize },
    #[error("risk level epsilon = {0} is outside the admissible range")]
    InvalidEpsilon(f64),
    #[error("non-finite successor value")]
    NonFinite,
    #[error("distribution carries no probability mass")]
    Empty,
}

/// Choice of one-step coherent risk measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RiskMeasure {
    Expectation,
    Cvar { epsilon: f64 },
    Evar { epsilon: f64 },
}

impl RiskMeasure {
    pub fn epsilon(&self) -> Option<f64> {
        match *self {
            Self::Expectation => None,
            Self::Cvar { epsilon } | Self::Evar { epsilon } => Some(epsilon),
        }
    }

    /// Checks `ε ∈ (0, 1]`.
    pub fn validate(&self) -> Result<(), RiskError> {
        match self.epsilon() {
            Some(e) if !(e > 0.0 && e <= 1.0) => Err(RiskError::InvalidEpsilon(e)),
            _ => Ok(()),
        }
    }

    /// True when `σ` is linear in `v` (the risk-neutral cases).
    pub fn is_linear(&self) -> bool {
        match *self {
            Self::Expectation => true,
            Self::Cvar { epsilon } | Self::Evar { epsilon } => epsilon == 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Expectation => "expectation",
            Self::Cvar { .. } => "cvar",
            Self::Evar { .. } => "evar",
        }
    }
}

impl fmt::Display for RiskMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.epsilon() {
            None => f.write_str(self.name()),
            Some(e) => write!(f, "{}({e})", self.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaResult {
    pub value: f64,
    /// Minimizing auxiliary variable of the CVaR/EVaR variational formula.
    /// For EVaR, `Some(0.0)` marks the risk-neutral limit `ζ → 0` and `None`
    /// means the infimum is only approached as `ζ → ∞` (value = max).
    pub zeta_star: Option<f64>,
    /// `∂σ/∂v`, aligned with the input values.
    pub subgradient: Vec<f64>,
}

fn check(values: &[f64], probs: &[f64]) -> Result<(), RiskError> {
    if values.len() != probs.len() {
        return Err(RiskError::LengthMismatch {
            values: values.len(),
            probabilities: probs.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(RiskError::NonFinite);
    }
    if !probs.iter().any(|&p| p > 0.0) {
        return Err(RiskError::Empty);
    }
    Ok(())
}

/// `Σ p_j v_j` with subgradient `p`.
pub fn expectation(values: &[f64], probs: &[f64]) -> Result<SigmaResult, RiskError> {
    check(values, probs)?;
    Ok(expectation_unchecked(values, probs))
}

fn expectation_unchecked(values: &[f64], probs: &[f64]) -> SigmaResult {
    let value = values.iter().zip(probs).map(|(v, p)| v * p).sum();
    SigmaResult {
        value,
        zeta_star: None,
        subgradient: probs.to_vec(),
    }
}

/// Indices of positive-probability atoms sorted by decreasing value.
fn descending_atoms(values: &[f64], probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&j| probs[j] > 0.0).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// `CVaR_ε(v) = inf_ζ { ζ + (1/ε) Σ p_j (v_j − ζ)_+ }`, in closed form.
///
/// `ζ*` is the smallest atom value with `P(V > ζ*) ≤ ε`, i.e. the left end of
/// the flat region of the piecewise-linear objective.
pub fn cvar(values: &[f64], probs: &[f64], epsilon: f64) -> Result<SigmaResult, RiskError> {
    check(values, probs)?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(RiskError::InvalidEpsilon(epsilon));
    }
    let order = descending_atoms(values, probs);
    if epsilon == 1.0 {
        let mut out = expectation_unchecked(values, probs);
        out.zeta_star = Some(values[*order.last().expect("non-empty")]);
        return Ok(out);
    }

    // Walk groups of equal value from the top; `above` is P(V > group value).
    let mut above = 0.0;
    let mut start = 0;
    let (group_start, group_end) = loop {
        let v = values[order[start]];
        let mut end = start;
        let mut mass = 0.0;
        while end < order.len() && values[order[end]] == v {
            mass += probs[order[end]];
            end += 1;
        }
        if end == order.len() || above + mass > epsilon {
            break (start, end);
        }
        above += mass;
        start = end;
    };

    let zeta = values[order[group_start]];
    let mut subgradient = vec![0.0; values.len()];
    let mut tail = 0.0;
    for &j in &order[..group_start] {
        subgradient[j] = probs[j] / epsilon;
        tail += probs[j] * (values[j] - zeta);
    }
    let group_mass: f64 = order[group_start..group_end].iter().map(|&j| probs[j]).sum();
    let remaining = (1.0 - above / epsilon).max(0.0);
    for &j in &order[group_start..group_end] {
        subgradient[j] = remaining * probs[j] / group_mass;
    }
    Ok(SigmaResult {
        value: zeta + tail / epsilon,
        zeta_star: Some(zeta),
        subgradient,
    })
}

/// `EVaR_ε(v) = inf_{ζ>0} log(Σ p_j e^{ζ v_j} / ε) / ζ`.
///
/// The minimizer solves `KL(q_ζ ‖ p) = log(1/ε)` where `q_ζ ∝ p e^{ζ v}` is
/// the exponentially tilted distribution; the KL divergence is increasing in
/// `ζ`, so the root is found by a safeguarded Newton iteration on a
/// geometrically grown bracket. All exponentials are shifted by `max v`.
///
/// At `ε = 1` the infimum is the `ζ → 0` limit, the mean. When the top atom
/// carries at least `ε` of the mass the infimum is the `ζ → ∞` limit, the
/// maximum, and the subgradient is `p` conditioned on the top atom.
pub fn evar(values: &[f64], probs: &[f64], epsilon: f64) -> Result<SigmaResult, RiskError> {
    check(values, probs)?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(RiskError::InvalidEpsilon(epsilon));
    }
    if epsilon == 1.0 {
        let mut out = expectation_unchecked(values, probs);
        out.zeta_star = Some(0.0);
        return Ok(out);
    }

    let mut top = f64::NEG_INFINITY;
    let mut bottom = f64::INFINITY;
    for (&v, &p) in values.iter().zip(probs) {
        if p > 0.0 {
            top = top.max(v);
            bottom = bottom.min(v);
        }
    }
    let top_mass: f64 = values
        .iter()
        .zip(probs)
        .filter(|&(&v, &p)| p > 0.0 && v == top)
        .map(|(_, &p)| p)
        .sum();
    let range = top - bottom;

    if range == 0.0 || top_mass >= epsilon {
        let subgradient = values
            .iter()
            .zip(probs)
            .map(|(&v, &p)| if p > 0.0 && v == top { p / top_mass } else { 0.0 })
            .collect();
        return Ok(SigmaResult {
            value: top,
            zeta_star: None,
            subgradient,
        });
    }

    // Dimensionless problem: x_j = (v_j - top) / range ∈ [-1, 0], u = ζ·range.
    let xs: Vec<f64> = values.iter().map(|&v| (v - top) / range).collect();
    let target = -libm::log(epsilon);
    let tilt = Tilt { xs: &xs, probs };

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while tilt.eval(hi).kl < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..200 {
        let t = tilt.eval(u);
        let f = t.kl - target;
        if f > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        if f == 0.0 || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let slope = u * t.variance;
        let newton = u - f / slope;
        u = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let t = tilt.eval(u);
    let value = top + range * (t.log_mgf + target) / u;
    Ok(SigmaResult {
        value,
        zeta_star: Some(u / range),
        subgradient: t.weights,
    })
}

struct Tilt<'a> {
    xs: &'a [f64],
    probs: &'a [f64],
}

struct TiltEval {
    /// `log Σ p_j e^{u x_j}`
    log_mgf: f64,
    kl: f64,
    variance: f64,
    weights: Vec<f64>,
}

impl Tilt<'_> {
    fn eval(&self, u: f64) -> TiltEval {
        let mut weights: Vec<f64> = self
            .xs
            .iter()
            .zip(self.probs)
            .map(|(&x, &p)| if p > 0.0 { p * libm::exp(u * x) } else { 0.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let mean: f64 = weights.iter().zip(self.xs).map(|(w, x)| w * x).sum();
        let second: f64 = weights
            .iter()
            .zip(self.xs)
            .map(|(w, x)| w * (x - mean) * (x - mean))
            .sum();
        let log_mgf = libm::log(total);
        TiltEval {
            log_mgf,
            kl: u * mean - log_mgf,
            variance: second,
            weights,
        }
    }
}

/// Evaluates `σ` for `measure` on values aligned with `probs`.
pub fn sigma_slices(
    measure: &RiskMeasure,
    values: &[f64],
    probs: &[f64],
) -> Result<SigmaResult, RiskError> {
    match *measure {
        RiskMeasure::Expectation => expectation(values, probs),
        RiskMeasure::Cvar { epsilon } => cvar(values, probs, epsilon),
        RiskMeasure::Evar { epsilon } => evar(values, probs, epsilon),
    }
}

/// Risk transition map `σ(v, s, p(·|s,α))`: `values` is indexed like
/// `dist.support()`.
pub fn sigma(
    measure: &RiskMeasure,
    values: &[f64],
    dist: &DiscreteDistribution,
) -> Result<SigmaResult, RiskError> {
    sigma_slices(measure, values, dist.probabilities())
}

pub fn expectation_sigma(
    values: &[f64],
    dist: &DiscreteDistribution,
) -> Result<SigmaResult, RiskError> {
    expectation(values, dist.probabilities())
}

pub fn cvar_sigma(
    values: &[f64],
    dist: &DiscreteDistribution,
    epsilon: f64,
) -> Result<SigmaResult, RiskError> {
    cvar(values, dist.probabilities(), epsilon)
}

/// EVaR on a distribution; `ε` must lie in `(0, 1)`.
pub fn evar_sigma(
    values: &[f64],
    dist: &DiscreteDistribution,
    epsilon: f64,
) -> Result<SigmaResult, RiskError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(RiskError::InvalidEpsilon(epsilon));
    }
    evar(values, dist.probabilities(), epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new((0..p.len()).collect(), p.to_vec()).unwrap()
    }

    /// CVaR objective minimized over a uniform ζ grid.
    fn cvar_grid(values: &[f64], probs: &[f64], eps: f64, step: f64) -> f64 {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let n = ((hi - lo) / step).ceil() as usize;
        (0..=n)
            .map(|k| {
                let z = lo + k as f64 * step;
                z + values
                    .iter()
                    .zip(probs)
                    .map(|(v, p)| p * (v - z).max(0.0))
                    .sum::<f64>()
                    / eps
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn expectation_examples() {
        assert_eq!(expectation_sigma(&[1.0, 3.0], &dist(&[0.5, 0.5])).unwrap().value, 2.0);
        assert_eq!(expectation_sigma(&[7.0], &dist(&[1.0])).unwrap().value, 7.0);
        let r = expectation_sigma(&[0.0, 10.0], &dist(&[0.9, 0.1])).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        assert_eq!(r.subgradient, vec![0.9, 0.1]);
        assert!(expectation(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn cvar_matches_grid_oracle_on_two_point_law() {
        let v = [0.0, 10.0];
        let p = [0.9, 0.1];
        // Frozen from the ζ-grid oracle at step 1e-4.
        assert!((cvar_grid(&v, &p, 0.1, 1e-4) - 10.0).abs() < 1e-9);
        assert!((cvar_grid(&v, &p, 0.2, 1e-4) - 5.0).abs() < 1e-9);
        let r = cvar(&v, &p, 0.1).unwrap();
        assert!((r.value - 10.0).abs() < 1e-12);
        let r = cvar(&v, &p, 0.2).unwrap();
        assert!((r.value - 5.0).abs() < 1e-12);
        assert_eq!(r.zeta_star, Some(0.0));
        assert!((r.subgradient[0] - 0.5).abs() < 1e-12);
        assert!((r.subgradient[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cvar_at_one_is_expectation_bitwise() {
        let v = [3.0, -1.0, 2.5];
        let d = dist(&[0.2, 0.3, 0.5]);
        let e = expectation_sigma(&v, &d).unwrap();
        let c = cvar_sigma(&v, &d, 1.0).unwrap();
        assert_eq!(e.value, c.value);
        assert_eq!(e.subgradient, c.subgradient);
    }

    #[test]
    fn cvar_flat_region_takes_left_endpoint() {
        // P(V > 0) = 0.25 = ε exactly: every ζ in [0, 4] minimizes.
        let r = cvar(&[0.0, 4.0, 8.0], &[0.75, 0.125, 0.125], 0.25).unwrap();
        assert_eq!(r.zeta_star, Some(0.0));
        assert!((r.value - 6.0).abs() < 1e-12);
    }

    #[test]
    fn cvar_rejects_bad_epsilon() {
        assert!(cvar(&[1.0], &[1.0], 0.0).is_err());
        assert!(cvar(&[1.0], &[1.0], 1.5).is_err());
    }

    #[test]
    fn evar_constant_is_the_constant() {
        for eps in [0.01, 0.15, 0.9] {
            let r = evar_sigma(&[4.25], &dist(&[1.0]), eps).unwrap();
            assert_eq!(r.value, 4.25);
            let r = evar(&[-3.0, -3.0], &[0.5, 0.5], eps).unwrap();
            assert_eq!(r.value, -3.0);
        }
    }

    #[test]
    fn evar_sits_between_cvar_and_max() {
        let v = [0.0, 10.0];
        let p = [0.9, 0.1];
        let c = cvar(&v, &p, 0.15).unwrap().value;
        let e = evar(&v, &p, 0.15).unwrap();
        assert!(e.value >= c - 1e-12 && e.value <= 10.0, "{} vs {}", e.value, c);
        // Brute-force the infimum over a fine log-spaced ζ grid.
        let brute = (0..200_000)
            .map(|k| libm::pow(10.0, -4.0 + 8.0 * k as f64 / 200_000.0))
            .map(|z| libm::log((0.9 + 0.1 * libm::exp(10.0 * z)) / 0.15) / z)
            .fold(f64::INFINITY, f64::min);
        assert!((e.value - brute).abs() < 1e-6, "{} vs {brute}", e.value);
        let g = e.subgradient;
        assert!((g[0] + g[1] - 1.0).abs() < 1e-12);
        assert!((g[0] * v[0] + g[1] * v[1] - e.value).abs() < 1e-9);
    }

    #[test]
    fn evar_small_epsilon_tends_to_max() {
        let r = evar_sigma(&[0.0, 10.0], &dist(&[0.9, 0.1]), 1e-6).unwrap();
        assert!((r.value - 10.0).abs() < 1e-3);
        let r = evar(&[0.0, 1.0, 10.0], &[0.5, 0.49, 0.01], 0.02).unwrap();
        assert!(r.value < 10.0 && r.value > 5.0);
        assert!(r.zeta_star.unwrap() > 0.0);
    }

    #[test]
    fn evar_domain_checks() {
        let d = dist(&[1.0]);
        assert!(evar_sigma(&[1.0], &d, 1.0).is_err());
        assert!(evar_sigma(&[1.0], &d, 0.0).is_err());
        assert!(evar(&[f64::NAN], &[1.0], 0.5).is_err());
        // ε = 1 through the measure is the analytic mean limit.
        let r = evar(&[0.0, 2.0], &[0.5, 0.5], 1.0).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn evar_is_shift_stable() {
        let v = [0.3, 2.0, 5.5, 1.0];
        let p = [0.4, 0.3, 0.1, 0.2];
        let base = evar(&v, &p, 0.15).unwrap().value;
        let shifted: Vec<f64> = v.iter().map(|x| x + 1e6).collect();
        let moved = evar(&shifted, &p, 0.15).unwrap().value - 1e6;
        assert!((base - moved).abs() < 1e-5);
    }

    #[test]
    fn dispatch_is_identity_for_expectation() {
        let v = [0.1, 0.7, 0.2];
        let d = dist(&[0.3, 0.3, 0.4]);
        let a = sigma(&RiskMeasure::Expectation, &v, &d).unwrap();
        let b = expectation_sigma(&v, &d).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn zero_mass_atoms_are_ignored() {
        let a = evar(&[0.0, 100.0, 3.0], &[0.5, 0.0, 0.5], 0.3).unwrap();
        let b = evar(&[0.0, 3.0], &[0.5, 0.5], 0.3).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
        assert_eq!(a.subgradient[1], 0.0);
        let c = cvar(&[0.0, 100.0, 3.0], &[0.5, 0.0, 0.5], 0.3).unwrap();
        assert!((c.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn measure_validation_and_display() {
        assert!(RiskMeasure::Cvar { epsilon: 0.15 }.validate().is_ok());
        assert!(RiskMeasure::Evar { epsilon: 1.5 }.validate().is_err());
        assert!(RiskMeasure::Evar { epsilon: 1.0 }.is_linear());
        assert_eq!(
            std::format!("{}", RiskMeasure::Cvar { epsilon: 0.15 }),
            "cvar(0.15)"
        );
    }
}
