//! Seedable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit master seed and
//! addressed by a 64-bit stream number (`ChaCha8Rng::set_stream`). Streams
//! with distinct numbers are independent, and the mapping is stable across
//! platforms, so replication `i` of an experiment draws from the same
//! numbers regardless of which thread runs it or in which order.
//!
//! Stream numbers are `replication * STREAMS_PER_REPLICATION + purpose`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAMS_PER_REPLICATION: u64 = 8;

/// Purpose slots within one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Innovations = 0,
    Contamination = 1,
    Sampler = 2,
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for a sub-task of replication `rep`, derived from the master seed.
pub fn replication_seed(master: u64, rep: u64, purpose: Purpose) -> u64 {
    use rand::RngCore;
    stream(master, rep * STREAMS_PER_REPLICATION + purpose as u64).next_u64()
}
