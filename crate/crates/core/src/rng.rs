//! Seed derivation helpers.
//!
//! Every random draw in the crate comes from a generator keyed by
//! `(seed, tag, index)`, so parallel and serial evaluation see the same
//! numbers regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream tag and a counter into a new seed.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ tag.rotate_left(17)) ^ index.rotate_left(41))
}

pub fn stream_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}

/// Stream tags, kept in one place so that no two consumers collide.
pub mod tags {
    pub const KMEANS_INIT: u64 = 1;
    pub const GRADIENT_SAMPLES: u64 = 2;
    pub const POSTERIOR_LIPSCHITZ: u64 = 3;
    pub const COVERING: u64 = 4;
    pub const DATASET: u64 = 5;
    pub const DISTURBANCE: u64 = 6;
    pub const TEST_SET: u64 = 7;
    pub const TERMINAL: u64 = 8;
    pub const STEADY_STARTS: u64 = 9;
    pub const GAP_PROBE: u64 = 10;
    pub const BENCH: u64 = 11;
    pub const GRADCHECK: u64 = 12;
    pub const CALIBRATION: u64 = 13;
}
