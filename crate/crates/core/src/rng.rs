//! Seed derivation. Every random stream in the pipeline is a `ChaCha8Rng`
//! keyed by a seed mixed from a parent seed and a stream label, so replays do
//! not depend on call order across modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and an ordered list of integer labels.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(mix64(parent), |acc, &l| mix64(acc ^ mix64(l)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Stream labels.
pub const STREAM_SCENE: u64 = 1;
pub const STREAM_SEGMENT: u64 = 2;
pub const STREAM_HANDLES: u64 = 3;
pub const STREAM_POLICY: u64 = 4;
pub const STREAM_TRIAL: u64 = 5;
pub const STREAM_SPLIT: u64 = 6;
