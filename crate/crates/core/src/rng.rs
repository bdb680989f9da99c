//! Seeded randomness.
//!
//! All stochastic code takes an explicit RNG. Independent tasks get their own
//! ChaCha stream derived from `(seed, task index)`, and per-coordinate
//! decisions use a stateless hash so evaluation order never matters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent stream for task `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based uniform draw in `[0, 1)` keyed by `seed` and `keys`.
pub fn keyed_uniform(seed: u64, keys: &[u64]) -> f64 {
    let mut h = splitmix64(seed);
    for &k in keys {
        h = splitmix64(h ^ k);
    }
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
