//! Seeding helpers shared by the samplers.
//!
//! Every stochastic routine in the crate takes an explicit integer seed and
//! builds its own ChaCha stream, so results never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// The generator used throughout the crate.
pub type SvcjRng = ChaCha20Rng;

/// Builds a generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SvcjRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Derives a child seed from a base seed and a task index.
///
/// Uses the SplitMix64 finalizer on a golden-ratio offset of the index, which
/// decorrelates neighbouring indices.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
