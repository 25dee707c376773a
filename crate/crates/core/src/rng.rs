//! Seed splitting.
//!
//! Every consumer of randomness derives its own stream from a master seed and
//! a path of integer tags, so results never depend on evaluation order or on
//! the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Tags for the standard consumers.
pub mod tag {
    pub const MEASUREMENTS: u64 = 0x4d45_4153;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const SIGNAL: u64 = 0x5349_474e;
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const SOLVER: u64 = 0x534f_4c56;
    pub const CHUNK: u64 = 0x4348_554e;
    pub const PAIR: u64 = 0x5041_4952;
    pub const CENTER: u64 = 0x4345_4e54;
    pub const RESTART: u64 = 0x5245_5354;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of tags.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(0x632b_e59b_d9b4_e019))))
}

/// Opens the stream addressed by `seed` and `path`.
pub fn stream(seed: u64, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}
