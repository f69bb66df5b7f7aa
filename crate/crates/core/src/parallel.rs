//! Worker-capped parallel map with results in input order.

use rayon::prelude::*;

/// Maps `f` over `items` on at most `workers` threads. Output order matches
/// input order regardless of scheduling.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}), running sequentially");
            items.iter().map(f).collect()
        }
    }
}

/// Worker count from the `SURROFLOOD_WORKERS` environment variable, or the
/// number of available CPUs.
pub fn default_workers() -> usize {
    std::env::var("SURROFLOOD_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n: &usize| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
