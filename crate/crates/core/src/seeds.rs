//! Deterministic seed derivation and Gaussian sampling helpers.
//!
//! Every randomized routine in the crate takes a 64-bit master seed and
//! derives independent per-trial seeds with [`mix_seed`], so a trial's stream
//! does not depend on thread scheduling or on how many trials run before it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// splitmix64 finalizer; decorrelates nearby inputs.
fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `index` from a master seed.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ index.wrapping_mul(0xA076_1D64_78BD_642F))
}

/// The crate-wide RNG; cheap to seed and identical on every platform.
pub type Prng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Prng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_scalar(rng: &mut Prng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_vector(n: usize, rng: &mut Prng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Standard-normal matrix, filled column by column (the fill order is part of
/// the reproducibility contract).
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Prng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_seed_is_deterministic_and_spreads() {
        assert_eq!(mix_seed(42, 0), mix_seed(42, 0));
        assert_ne!(mix_seed(42, 0), mix_seed(42, 1));
        assert_ne!(mix_seed(42, 0), mix_seed(43, 0));
        // nearby indices should not produce correlated low bits
        let a = mix_seed(7, 1) & 0xFFFF;
        let b = mix_seed(7, 2) & 0xFFFF;
        assert_ne!(a, b);
    }

    #[test]
    fn gaussian_matrix_replays() {
        let mut r1 = rng_from_seed(5);
        let mut r2 = rng_from_seed(5);
        let a = gaussian_matrix(4, 3, &mut r1);
        let b = gaussian_matrix(4, 3, &mut r2);
        assert_eq!(a, b);
    }
}
