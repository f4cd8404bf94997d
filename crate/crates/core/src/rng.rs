//! Seeded random number generation.
//!
//! All randomness flows through ChaCha8 so that streams are reproducible
//! across platforms for a given seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed from a parent seed and a stream label.
///
/// SplitMix64 finalizer over the pair; collisions are irrelevant at the
/// scale of a few thousand derived streams.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed
        .wrapping_add(label.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
