//! Deterministic seed plumbing.
//!
//! Every generated sample records the seed it was produced with. Seeds for
//! sub-tasks are derived by hashing, so the output of one episode does not
//! depend on how many other episodes ran before it or on which worker.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SampleRng = ChaCha8Rng;

/// Seed for a named sub-stream of `parent`.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(parent.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}

/// Per-episode seed from the global seed and episode id.
pub fn episode_seed(global: u64, episode_id: &str) -> u64 {
    derive_seed(global, &format!("episode:{episode_id}"))
}

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}
