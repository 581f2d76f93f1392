//! Deterministic RNG streams keyed by `(seed, task, component)`.
//!
//! Every consumer of randomness draws from its own stream, so enabling an
//! extra scoring pass or probe never shifts the data order of a run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Stable 64-bit seed derived from the run seed, a task index and a component name.
pub fn derive_seed(seed: u64, task: u64, component: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(task.to_le_bytes());
    h.update(component.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn stream(seed: u64, task: u64, component: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, task, component))
}

/// Factory for the per-task streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    pub seed: u64,
    pub task: u64,
}

impl RngStreams {
    pub fn new(seed: u64, task: usize) -> Self {
        Self {
            seed,
            task: task as u64,
        }
    }

    pub fn get(&self, component: &str) -> Rng {
        stream(self.seed, self.task, component)
    }
}
