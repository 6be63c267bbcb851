//! Seed splitting.
//!
//! Every consumer of randomness gets its own stream derived from the run
//! seed and a fixed stream label. Derivation is counter based (a SplitMix64
//! finalizer over `seed` and `label`), so adding a new consumer never shifts
//! the draws seen by an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream labels used inside the crate. Callers may use any other value.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const TIMES: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SAMPLER: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const FORWARD: u64 = 7;
    pub const EVAL: u64 = 8;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, label: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(label.wrapping_mul(0xd1b5_4a32_d192_ed03)))
}

pub fn stream_rng(seed: u64, label: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, label))
}
