//! Seeded random streams.
//!
//! All randomness in the crate comes from ChaCha8 (the ChaCha stream cipher
//! with 8 rounds, as implemented by `rand_chacha`). It is counter based, so a
//! `(seed, stream)` pair yields the same sequence on every platform. Distinct
//! purposes within one replication (graph, noise variances, samples, CV folds)
//! draw from distinct streams of the same seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_GRAPH: u64 = 1;
pub const STREAM_GAMMA: u64 = 2;
pub const STREAM_SAMPLE: u64 = 3;
pub const STREAM_FOLDS: u64 = 4;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
