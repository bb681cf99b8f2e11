//! Seed handling. A single run seed fans out into independent ChaCha streams
//! so that initialisation, shuffling and dropout never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named substreams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    Folds = 4,
    FreshInit = 5,
    Oracle = 6,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    indexed(seed, stream as u64)
}

/// Stream `index` of the ChaCha generator keyed by `seed`.
pub fn indexed(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
