//! Ordered parallel ensembles.
//!
//! Paths are produced with `par_iter` and collected in index order, then
//! reduced sequentially, so a result depends only on the seed and not on the
//! number of worker threads.

use rayon::prelude::*;

use crate::stats::Welford;

pub fn map_paths<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Mean and spread of `f(i)` over `n` paths.
pub fn mean_over<F>(n: usize, f: F) -> Welford
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    Welford::from_slice(&map_paths(n, f))
}

/// Runs `op` on a pool of `jobs` threads (0 means rayon's default).
pub fn with_jobs<R: Send>(jobs: usize, op: impl FnOnce() -> R + Send) -> R {
    if jobs == 0 {
        return op();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
        .install(op)
}
