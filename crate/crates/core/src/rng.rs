//! Seed derivation and the frozen random stream used across the crate.
//!
//! Every stochastic step (field realization, subsampling, bootstraps, weight
//! initialization) draws from its own [`ChaCha8Rng`] seeded through
//! [`derive_seed`]. Streams never depend on the order in which parallel work
//! is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer. A bijection on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed number `index` of `base`.
///
/// `mix64(base + GOLDEN_GAMMA * (index + 1))`: the same construction SplitMix64
/// uses to walk its state, so distinct `(base, index)` pairs with small index
/// differences map to distinct seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(base.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

/// Generator for a fully derived seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
