//! Splittable, counter-style stream derivation for reproducible parallel
//! Monte Carlo.
//!
//! Every particle, replicate, path and draw owns a 64-bit stream id derived
//! by hashing its lineage, never by position in a shared sequence. Two runs
//! that agree on (seed, lineage) therefore draw identical randomness even if
//! other parts of the tree are pruned (barriers) or scheduled on different
//! threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Good avalanche, cheap, standard.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream id of the root particle of a simulation.
#[inline]
pub fn root_stream(seed: u64) -> u64 {
    mix64(seed ^ 0x5851_f42d_4c95_7f2d)
}

/// Stream id of the `child_index`-th child of a particle, derived from the
/// parent's stream. Pruning siblings does not change the result.
#[inline]
pub fn child_stream(parent: u64, child_index: u32) -> u64 {
    mix64(parent ^ mix64(u64::from(child_index) ^ 0x14057_b7ef_767_814f))
}

/// Independent substream `index` of a base seed (replicates, draws, paths).
#[inline]
pub fn substream(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index ^ 0xd134_2543_de82_ef95))
}

/// The generator used throughout: small state, fast, reproducible across
/// platforms and crate versions pinned in the workspace.
pub type Stream = ChaCha8Rng;

/// Construct the generator for a stream id.
#[inline]
pub fn stream_rng(stream: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(stream)
}
