//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a base seed and a purpose tag, so independent consumers never
//! share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_INIT: u64 = 0x696e_6974;
pub const TAG_SPLIT: u64 = 0x7370_6c74;
pub const TAG_SHUFFLE: u64 = 0x7368_7566;
pub const TAG_DROPOUT: u64 = 0x6472_6f70;
pub const TAG_FOLDS: u64 = 0x666f_6c64;
pub const TAG_INJECT: u64 = 0x696e_6a63;
pub const TAG_TRAIN: u64 = 0x7472_6e73;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(base: u64, tag: u64) -> u64 {
    mix(mix(base) ^ tag)
}

pub fn rng(base: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, tag))
}
