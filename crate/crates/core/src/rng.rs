//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! addressed by `(seed, stream)`, so results never depend on thread
//! scheduling or on how many other streams were consumed first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used inside the crate. Callers may use any other value.
pub mod streams {
    pub const DISTRIBUTION: u64 = 1;
    pub const SAMPLES: u64 = 2;
    pub const INIT: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const MONTE_CARLO: u64 = 5;
    pub const PROBE: u64 = 6;
    pub const REFERENCE: u64 = 7;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a list of coordinates into a child seed.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}
