//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a seed derived from the single user seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Splitmix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-seed for `(stream, index)` under `seed`.
pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(stream)) ^ index)
}

pub mod stream {
    pub const MODEL_INIT: u64 = 1;
    pub const AUGMENT: u64 = 2;
    pub const FOLD: u64 = 3;
    pub const GRADCHECK: u64 = 4;
}
