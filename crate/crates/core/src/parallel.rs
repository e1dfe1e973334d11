//! Worker-count control for data preparation.

use rayon::prelude::*;

/// Environment variable holding the number of data-preparation workers.
pub const WORKERS_ENV: &str = "PAVESCAN_NUM_WORKERS";

/// Worker count from `PAVESCAN_NUM_WORKERS`, defaulting to 1.
pub fn num_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Maps `f` over `0..n` on the configured number of workers, preserving order.
///
/// Results never depend on the worker count as long as `f` is a pure function of its index.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let workers = num_workers();
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("could not start {workers} workers ({e}); running serially");
            (0..n).map(f).collect()
        }
    }
}
