//! Worker-pool plumbing. `STOCHREL_THREADS` caps the parallelism of
//! per-pair checks; decisions themselves are pure, so results do not
//! depend on the thread count.

use std::sync::OnceLock;

use rayon::ThreadPool;

fn pool() -> &'static ThreadPool {
    static POOL: OnceLock<ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = std::env::var("STOCHREL_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
        {
            builder = builder.num_threads(n);
        }
        builder.build().expect("worker pool construction cannot fail")
    })
}

/// Runs a closure inside the crate's worker pool so rayon parallel
/// iterators respect the configured thread cap.
pub(crate) fn run_pooled<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    pool().install(f)
}
