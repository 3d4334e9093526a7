//! Seed derivation for independent random streams.
//!
//! Every run owns a master seed. Scheduler, learner and instance randomness
//! are separate ChaCha streams of that seed, so the scheduler's draws never
//! depend on what the learner consumed (and vice versa).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tag for scheduler randomness (admission coins, proxy delays,
/// batch representatives).
pub const SCHEDULER_STREAM: u64 = 0;
/// Stream tag for the learner's action draws.
pub const LEARNER_STREAM: u64 = 1;
/// Stream tag for instance generation.
pub const INSTANCE_STREAM: u64 = 2;

pub fn stream(seed: u64, tag: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Master seed of run `index` under `base`. SplitMix64 finalizer over the
/// pair, so neighbouring indices land far apart.
pub fn run_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
