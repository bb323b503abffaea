//! Seeded random streams.
//!
//! Every consumer draws from ChaCha8 seeded with the user seed and a fixed
//! stream id, so data generation, splitting and training never share state.
//! Per-trial seeds are derived with SplitMix64 so trial `k` of a benchmark is
//! reproducible without running trials `0..k`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids. Changing one of these changes every generated artifact.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const PLANTED: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const HEURISTIC: u64 = 5;
    pub const HELDOUT: u64 = 6;
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the `index`-th child of `seed` (trials, grid points, ...).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
