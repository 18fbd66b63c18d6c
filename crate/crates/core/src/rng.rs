//! Counter-based random number streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by a
//! master seed plus a tag path (dataset index, iteration, step, subject, ...).
//! Streams derived from distinct key paths are independent, so results are
//! bit-reproducible regardless of how work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Step tags used as the first element of a key path.
pub mod tag {
    pub const GENERATE: u64 = 1;
    pub const AMPUTE: u64 = 2;
    pub const INIT_FILL: u64 = 3;
    pub const DRAW_PARAMS: u64 = 4;
    pub const IMPUTE_G: u64 = 5;
    pub const DRAW_THETA: u64 = 6;
    pub const IMPUTE_CELL: u64 = 7;
    pub const BOOTSTRAP: u64 = 8;
    pub const METHOD: u64 = 9;
    pub const OS_SEED: u64 = 10;
}

/// Derive an independent RNG stream from a master seed and a tag path.
pub fn stream(master: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([tags.len() as u8]);
    for t in tags {
        hasher.update(t.to_le_bytes());
    }
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha12Rng::from_seed(digest)
}

/// Derive a child master seed (for handing a whole subsystem its own root).
pub fn child_seed(master: u64, tags: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([0xff, tags.len() as u8]);
    for t in tags {
        hasher.update(t.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
