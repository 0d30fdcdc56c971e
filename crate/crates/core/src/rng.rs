//! Seeded randomness.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose seed is
//! derived from a master seed and a path of counters (round, client, ...).
//! Derivation is a pure function of its inputs, so the order in which
//! parallel workers run never changes what they draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `master` along a counter path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &c| {
        splitmix64(acc ^ splitmix64(c.wrapping_add(0x5851_F42D_4C95_7F2D)))
    })
}

pub fn rng_from(master: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, path))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
