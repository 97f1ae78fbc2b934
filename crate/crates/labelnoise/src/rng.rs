//! Deterministic RNG substreams.
//!
//! Every operation takes an explicit seed and derives a private stream from
//! it, so that independent stages of a pipeline never share or disturb each
//! other's randomness. Streams are tagged: the same user seed with different
//! tags yields statistically independent generators, and the same
//! (seed, tag) pair always yields the same stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Stage tags. Values are arbitrary but frozen: changing one changes every
// downstream realization.
pub(crate) const TAG_SYNTH: u64 = 0x01;
pub(crate) const TAG_INJECT: u64 = 0x02;
pub(crate) const TAG_RESAMPLE: u64 = 0x03;
pub(crate) const TAG_FLIP: u64 = 0x04;
pub(crate) const TAG_MATRIX: u64 = 0x05;
pub(crate) const TAG_SHUFFLE: u64 = 0x06;
pub(crate) const TAG_PEER: u64 = 0x07;
pub(crate) const TAG_SPLIT: u64 = 0x08;
pub(crate) const TAG_MISSPEC: u64 = 0x09;
pub(crate) const TAG_GROUPS: u64 = 0x0a;
pub(crate) const TAG_DEST: u64 = 0x0b;

/// splitmix64 finalizer; decorrelates consecutive (seed, tag) pairs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A private generator for stage `tag` of an operation seeded with `seed`.
pub(crate) fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed ^ mix(tag)))
}

/// A derived 64-bit seed, for handing a sub-operation its own seed parameter.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix(seed ^ mix(tag))
}
