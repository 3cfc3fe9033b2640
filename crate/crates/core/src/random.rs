//! Seeded random MDPs for cross-checks against the brute-force oracle.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::mdp::{Mdp, MdpError};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomMdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_constraints: usize,
    /// Largest number of successors per `(s, α)`.
    pub max_support: usize,
    /// Costs are drawn from `[0, max_cost)`.
    pub max_cost: f64,
    pub discount: f64,
}

impl RandomMdpSpec {
    pub fn small(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            n_constraints: 1,
            max_support: 3,
            max_cost: 5.0,
            discount: 0.9,
        }
    }
}

/// Random MDP starting in state 0. Roughly one cost in five is zero so that
/// ties and inactive constraints show up.
pub fn random_mdp(spec: &RandomMdpSpec, seed: u64) -> Result<Mdp, MdpError> {
    let mut rng = rng::rng_from_seed(seed);
    let n = spec.n_states;
    let pairs = n * spec.n_actions;
    let mut states: Vec<usize> = (0..n).collect();
    let mut transitions = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let k = 1 + rng::index(&mut rng, spec.max_support.clamp(1, n.max(1)));
        rng::shuffle(&mut rng, &mut states);
        let weights: Vec<f64> = (0..k).map(|_| 0.05 + rng::uniform(&mut rng)).collect();
        let total: f64 = weights.iter().sum();
        transitions.push(
            states[..k]
                .iter()
                .zip(&weights)
                .map(|(&s, w)| (s, w / total))
                .collect(),
        );
    }
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        if rng::uniform(rng) < 0.2 {
            0.0
        } else {
            spec.max_cost * rng::uniform(rng)
        }
    };
    let objective: Vec<f64> = (0..pairs).map(|_| draw(&mut rng)).collect();
    let constraints: Vec<Vec<f64>> = (0..spec.n_constraints)
        .map(|_| (0..pairs).map(|_| draw(&mut rng)).collect())
        .collect();
    let mut kappa0 = vec![0.0; n];
    if n > 0 {
        kappa0[0] = 1.0;
    }
    Mdp::new(
        n,
        spec.n_actions,
        transitions,
        objective,
        constraints,
        kappa0,
        spec.discount,
    )
}
