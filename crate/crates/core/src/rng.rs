//! Named random streams derived from one master seed.
//!
//! Every consumer of randomness asks for a stream by `(name, index)`. The
//! stream seed is a hash of the master seed and the name, so adding a new
//! consumer never shifts the numbers another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derive a 64-bit seed for the stream `name[index]` under `master`.
pub fn derive_seed(master: u64, name: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((name.len() as u64).to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

pub fn stream(master: u64, name: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, name, index))
}

/// Plain seeded generator for APIs that take a single integer seed.
pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
