//! Seeded generators: every replication gets its own ChaCha stream derived
//! from a master seed, so results do not depend on scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

/// Generator for replication `index` under `master`.
pub fn stream(master: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// A fresh master seed for a named sub-task, so independent stages of a
/// pipeline do not share streams.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(tag.wrapping_add(1) << 32);
    rng.next_u64()
}

/// Runs `f(index, rng)` for every replication in parallel and returns the
/// results in index order.
pub fn replicate<T, F>(master: u64, reps: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut SimRng) -> T + Sync + Send,
{
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(master, i);
            f(i, &mut rng)
        })
        .collect()
}
