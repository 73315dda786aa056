//! Seed fan-out.
//!
//! Every command takes a single seed. Sub-tasks draw from their own ChaCha
//! stream keyed by a fixed stream id, so the random numbers one sub-task sees
//! do not depend on how many draws another sub-task made or in which order
//! they ran.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known stream ids.
pub mod streams {
    pub const SYNTH_DIRECTIONS: u64 = 1;
    pub const SYNTH_TRAIN: u64 = 2;
    pub const SYNTH_TEST: u64 = 3;
    pub const VALIDATION_SPLIT: u64 = 10;
    pub const CV_FOLDS: u64 = 11;
    pub const KMEANS: u64 = 20;
    pub const PLANTED: u64 = 30;
}

/// RNG for `stream` under the master `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent 64-bit seed (splitmix64 finalizer over seed and tag).
pub fn derive(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
