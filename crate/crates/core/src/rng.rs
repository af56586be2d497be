//! Deterministic RNG substreams.
//!
//! Every random quantity in a sweep is drawn from a ChaCha8 stream keyed by
//! the master seed and a path of indices (cell, graph, trial). Streams do not
//! depend on scheduling, so results are identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags keep graph and trial streams disjoint for equal index paths.
pub mod tag {
    pub const GRAPH: u64 = 0x4752_4150;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const BLOCKING: u64 = 0x424c_4f43;
    pub const CENTERS: u64 = 0x4345_4e54;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Build the stream for `master` and an index path.
pub fn substream(master: u64, path: &[u64]) -> SimRng {
    let mut state = master;
    let mut acc = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0xd6e8_feb8_6659_fd93).rotate_left(17) ^ acc;
        acc = splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

pub fn from_seed(seed: u64) -> SimRng {
    substream(seed, &[])
}
