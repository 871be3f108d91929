//! Explicit, reproducible random streams.
//!
//! Every stochastic routine takes a `&mut Prng` supplied by the caller; there is
//! no global generator. The generator is ChaCha8 (counter-based, identical
//! output on every platform). Streams for individual seeds are derived from
//! `(seed_base, index, experiment id)` with [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Prng = ChaCha8Rng;

/// Generator seeded from a 64-bit value.
pub fn seeded(seed: u64) -> Prng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for replicate `index` of `experiment`:
/// `splitmix64(splitmix64(fnv1a(experiment) ^ seed_base) ^ index)`.
pub fn derive_seed(seed_base: u64, index: u64, experiment: &str) -> u64 {
    splitmix64(splitmix64(fnv1a(experiment.as_bytes()) ^ seed_base) ^ index)
}

pub fn standard_normal(rng: &mut Prng) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit(rng: &mut Prng) -> f64 {
    use rand::Rng;
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
