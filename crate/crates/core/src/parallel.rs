//! Deterministic chunked parallelism.
//!
//! Work is split into a fixed number of chunks whose composition does not
//! depend on the thread count. Chunk `k` of a job tagged `tag` draws from its
//! own ChaCha stream derived from `(seed, tag, k)`, and the results are
//! collected in chunk order before any reduction, so outputs are
//! bit-identical for every pool size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

/// RNG for chunk `chunk` of the job `tag` under `seed`.
pub fn chunk_rng(seed: u64, tag: &str, chunk: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(chunk);
    rng
}

/// Runs `f(k, rng_k)` for `k in 0..n_chunks` on the current rayon pool and
/// returns the results in chunk order.
pub fn map_chunks<T, F>(n_chunks: usize, seed: u64, tag: &str, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync,
{
    (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = chunk_rng(seed, tag, k as u64);
            f(k, &mut rng)
        })
        .collect()
}

/// Splits `n` items into `chunks` contiguous ranges of nearly equal size.
pub fn chunk_ranges(n: usize, chunks: usize) -> Vec<std::ops::Range<usize>> {
    let chunks = chunks.max(1);
    (0..chunks).map(|k| (k * n / chunks)..((k + 1) * n / chunks)).collect()
}

/// Default chunk count for `n` items: fine enough to balance load on any
/// reasonable pool, coarse enough to keep per-chunk overhead negligible.
pub fn default_chunks(n: usize) -> usize {
    n.div_ceil(1000).clamp(1, 256)
}

/// Runs `f` on a dedicated pool of `threads` workers (global pool if `None`).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}
