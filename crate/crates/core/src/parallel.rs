//! Worker-count control.
//!
//! Every parallel stage in this crate produces results that do not depend on
//! the number of workers, so the thread count only affects speed.

use rayon::ThreadPool;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "MSVR_THREADS";

/// Worker count requested through [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse::<usize>().ok()).filter(|&n| n > 0)
}

/// Builds a pool with `threads` workers, or rayon's default when `None`.
pub fn pool(threads: Option<usize>) -> ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder.build().expect("failed to build worker pool")
}

/// Runs `op` on a pool sized from [`THREADS_ENV`].
pub fn install<R: Send>(op: impl FnOnce() -> R + Send) -> R {
    pool(threads_from_env()).install(op)
}
