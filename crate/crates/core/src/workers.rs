//! Worker-count policy and an order-preserving parallel map.
//!
//! Results are always returned in input order and reduced by the caller in
//! that order, so the worker count never changes any output bit.

use rayon::prelude::*;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "ABLAB_THREADS";

/// `ABLAB_THREADS` if set to a positive integer, else machine parallelism.
pub fn default_workers() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Maps `f` over `items` on up to `workers` threads, preserving order.
pub fn map_ordered<T, U, F>(workers: usize, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}
