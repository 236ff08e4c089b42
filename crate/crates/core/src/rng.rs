//! Seed derivation. Every random stream in a run is keyed by the run seed plus a
//! tuple of integer tags, so results never depend on call order or thread timing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `tags` into `seed`. Distinct tag tuples give unrelated seeds.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

pub fn rng_for(seed: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, tags))
}

// Stream identifiers, used as the first tag.
pub(crate) const STREAM_PARTITION: u64 = 1;
pub(crate) const STREAM_INIT: u64 = 2;
pub(crate) const STREAM_SELECT: u64 = 3;
pub(crate) const STREAM_LOCAL: u64 = 4;
pub(crate) const STREAM_SYNTH: u64 = 5;
pub(crate) const STREAM_SUBSET: u64 = 6;
