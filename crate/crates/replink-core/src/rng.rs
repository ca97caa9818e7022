//! Deterministic RNG stream management.
//!
//! Every stochastic routine in this crate takes an explicit RNG handle; no
//! global state is used anywhere. A run is reproduced exactly from its 64-bit
//! seed. Independent units of work (frames, sweep points, estimator stages)
//! each get their own stream so that they can execute concurrently and still
//! aggregate to the same result in any order.
//!
//! Splitting rules (stable, part of the output-reproducibility contract):
//! * frame `i` of a run seeded with `s` uses ChaCha8 keyed by `s` on stream `i`;
//! * auxiliary stages use ChaCha8 keyed by `splitmix64(s ^ splitmix64(tag))`,
//!   which keeps tagged generators out of the frame-stream family.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG used throughout the simulator. ChaCha8 is fast, portable and gives
/// identical output on every platform.
pub type SimRng = ChaCha8Rng;

/// Root generator of a run.
pub fn root_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Dedicated stream for one frame of a run.
pub fn frame_rng(seed: u64, frame_index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(frame_index);
    rng
}

/// Domain-separated generator for estimator stages, sweep points and other
/// non-frame work.
pub fn tagged_rng(seed: u64, tag: u64) -> SimRng {
    SimRng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)))
}

/// SplitMix64 finalizer; stable bit-mixing for seed derivation.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}
