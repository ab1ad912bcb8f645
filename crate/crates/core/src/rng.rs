//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from [`ChaCha8Rng`], whose
//! output is fixed across platforms. Independent streams for parallel tasks
//! are derived from `(master_seed, task_index)` with [`stream_seed`], a
//! SplitMix64 mix of both inputs, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for task `task_index` under `master_seed`.
pub fn stream_seed(master_seed: u64, task_index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ splitmix64(task_index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn stream(master_seed: u64, task_index: u64) -> ChainRng {
    ChainRng::seed_from_u64(stream_seed(master_seed, task_index))
}
