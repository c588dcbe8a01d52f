//! Seeded random streams.
//!
//! Every stochastic routine takes a `u64` seed and draws from
//! xoshiro256++ (`rand_xoshiro` 0.7), seeded through SplitMix64 as
//! `Xoshiro256PlusPlus::seed_from_u64` does. Independent sub-streams are
//! derived with [`stream`], so parallel sweeps reproduce the sequential
//! results regardless of scheduling.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

/// Name recorded in reports next to the seed.
pub const RNG_ALGORITHM: &str = "xoshiro256++ (rand_xoshiro 0.7, splitmix64 seeding)";

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Seed for sub-stream `index` of `seed`.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn stream(seed: u64, index: u64) -> Rng {
    seeded(stream_seed(seed, index))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
