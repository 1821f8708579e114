//! Keyed deterministic randomness.
//!
//! Every random decision is drawn from a generator seeded by mixing a base
//! seed with a tuple of tags such as (phase, iteration, node id). Runs are
//! reproducible regardless of evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with tags into a new 64-bit seed.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t)))
}

pub fn keyed_rng(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, tags))
}

/// A uniform draw in [0, 1) determined by the key alone.
pub fn keyed_unit(base: u64, tags: &[u64]) -> f64 {
    (derive(base, tags) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub mod tag {
    pub const SPANNER: u64 = 1;
    pub const CALIBRATION: u64 = 2;
    pub const SKETCH: u64 = 3;
    pub const LUBY: u64 = 4;
    pub const MIS: u64 = 5;
    pub const RULING: u64 = 6;
    pub const COVER: u64 = 7;
    pub const CLASS_SPANNER: u64 = 8;
    pub const ROUNDING: u64 = 9;
    pub const PROJECTION: u64 = 10;
    pub const RESEED: u64 = 11;
}
