//! Named random sub-streams derived from a single run seed.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

/// Independent random streams; perturbing one leaves the others untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Leiden = 2,
    Sampling = 3,
    Refine = 4,
    Data = 5,
}

/// Generator for `stream`, further split by `index` (cluster id, round, ...).
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 48) ^ index);
    rng
}

/// Derive a plain seed for APIs that take an integer seed.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    use rand::RngCore;
    stream_rng(seed, stream, index).next_u64()
}
