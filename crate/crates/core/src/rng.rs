//! Seeded random sources.
//!
//! Every consumer of randomness in a run draws from its own ChaCha stream
//! derived from the run seed, so changing how much one consumer draws never
//! shifts another consumer's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent consumers of randomness within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Channel = 2,
    Batches = 3,
    Data = 4,
    Partition = 5,
    Split = 6,
    Problem = 7,
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
