//! Deterministic RNG substreams.
//!
//! Every random stream in a run is keyed by the run seed plus a path of
//! integers (purpose, replicate, campaign, ...), so a stream never depends
//! on the order in which other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream purposes.
pub mod purpose {
    pub const TRUTH: u64 = 1;
    pub const ENVIRONMENT: u64 = 2;
    pub const SAMPLING: u64 = 3;
    pub const WORLD: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, path: &[u64]) -> SimRng {
    let mut h = splitmix64(seed);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    ChaCha8Rng::seed_from_u64(h)
}
