//! Named, independent random streams derived from a single root seed.
//!
//! Every source of randomness in an experiment is addressed by a path of
//! names (`"world"`, `"examples"`, `"splits"`, ...). Child seeds are the
//! first eight bytes of `SHA-256(parent_seed || name)`, so two streams with
//! different paths never share state and adding a new stream never perturbs
//! the existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, name: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(name.as_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        Self {
            seed: u64::from_le_bytes(bytes),
        }
    }

    /// Child addressed by a name and an index, e.g. `("seed", 2)`.
    pub fn indexed(&self, name: &str, index: u64) -> Self {
        self.child(&format!("{name}#{index}"))
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::seed_from_u64(self.seed)
    }
}

pub fn rng_from_seed(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
