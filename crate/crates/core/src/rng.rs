//! Seeded random streams.
//!
//! ChaCha is counter based, so every `(master_seed, stream)` pair names an
//! independent keystream. Trials draw from `substream(master, trial)` which
//! makes a Monte Carlo run independent of the order trials are executed in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Generator for a single seed (stream 0).
pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Generator for stream `index` under `master_seed`.
pub fn substream(master_seed: u64, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
