//! Worker pool shared by the embarrassingly parallel stages.
//!
//! The pool size honours `LORE_THREADS` when set; results are always merged
//! in input order so output never depends on scheduling.

use std::sync::OnceLock;

use rayon::prelude::*;

pub const THREADS_ENV: &str = "LORE_THREADS";

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("failed to build worker pool")
    })
}

/// Order-preserving parallel map.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    pool().install(|| items.par_iter().map(f).collect())
}
