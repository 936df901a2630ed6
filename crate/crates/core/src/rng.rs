//! Deterministic randomness. Every random quantity in the crate is drawn from
//! a ChaCha stream selected by `(seed, stream id)`, so results never depend
//! on scheduling or on how work is split across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream ids are namespaced so that different consumers of one seed do not
/// collide.
pub mod tag {
    pub const POTENTIAL_DRAW: u64 = 1 << 56;
    pub const CHAIN: u64 = 2 << 56;
    pub const EXACT_SAMPLE: u64 = 3 << 56;
    pub const EXPERIMENT: u64 = 4 << 56;
}

pub fn stream(seed: u64, id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// A child seed, a pure function of `(seed, id)`.
pub fn derive_seed(seed: u64, id: u64) -> u64 {
    stream(seed, id).next_u64()
}
