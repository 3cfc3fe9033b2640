//! Seed derivation and the few sampling primitives the simulator needs.

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mixes `(seed, stream)` into an independent 64-bit seed (SplitMix64
/// finalizer), so per-run generators do not depend on evaluation order.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(seed, stream))
}

/// Uniform draw from `[0, 1)` with 53 random bits.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform index in `0..n`; `n` must be positive.
pub fn index<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    let i = (uniform(rng) * n as f64) as usize;
    i.min(n - 1)
}

/// Samples from `(outcome, probability)` pairs by inversion. Falls back to the
/// last positive-probability outcome when rounding leaves `u` uncovered.
pub fn sample_pairs<R: Rng + ?Sized>(rng: &mut R, pairs: &[(usize, f64)]) -> usize {
    let u = uniform(rng);
    let mut acc = 0.0;
    let mut last = pairs[0].0;
    for &(s, p) in pairs {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = s;
        if u < acc {
            return s;
        }
    }
    last
}

/// Fisher-Yates shuffle.
pub fn shuffle<R: Rng + ?Sized, T>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ_and_repeat() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        let a: [u64; 4] = core::array::from_fn(|_| stream_rng(1, 2).next_u64());
        assert!(a.iter().all(|&x| x == a[0]));
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = rng_from_seed(42);
        let mut sum = 0.0;
        for _ in 0..10_000 {
            let u = uniform(&mut rng);
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        assert!((sum / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn sampling_skips_zero_mass() {
        let mut rng = rng_from_seed(3);
        for _ in 0..1000 {
            assert_eq!(sample_pairs(&mut rng, &[(0, 0.0), (5, 1.0), (9, 0.0)]), 5);
        }
    }
}
