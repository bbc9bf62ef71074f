//! Reproducible random streams.
//!
//! Every game uses ChaCha8 (RFC 7539 block function, 8 rounds) from
//! `rand_chacha`, whose output is specified bit-for-bit and therefore
//! identical across platforms. Independent streams are derived from a master
//! seed with SplitMix64 so that the environment and the learner never share
//! random numbers: two learners facing the same seed see the same instances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type GameRng = ChaCha8Rng;

/// Tag for the stream that generates environment instances.
pub const ENVIRONMENT_STREAM: u64 = 0x656e_7669;
/// Tag for the stream a learner samples its parameters from.
pub const LEARNER_STREAM: u64 = 0x6c65_6172;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `seed_i = hash(master, i)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index))
}

pub fn seeded(seed: u64) -> GameRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for stream `stream` of the key derived from `(master, tag)`.
pub fn stream_rng(master: u64, tag: u64, stream: u64) -> GameRng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, tag));
    rng.set_stream(stream);
    rng
}

/// Random-access generator for the instance of `round` in the game keyed by `seed`.
pub fn round_rng(seed: u64, round: usize) -> GameRng {
    stream_rng(seed, ENVIRONMENT_STREAM, round as u64)
}

pub fn learner_rng(seed: u64) -> GameRng {
    stream_rng(seed, LEARNER_STREAM, 0)
}
