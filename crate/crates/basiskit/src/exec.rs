//! Worker pool for per-client work.

use basiskit_core::algo::Executor;
use rayon::prelude::*;

pub const THREADS_ENV: &str = "BASISKIT_THREADS";

/// Runs client jobs on a dedicated rayon pool. Aggregation order is fixed by
/// the caller, so results do not depend on the thread count.
pub struct PoolExecutor {
    pool: rayon::ThreadPool,
}

impl PoolExecutor {
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .expect("thread pool");
        PoolExecutor { pool }
    }

    /// Pool capped by `BASISKIT_THREADS` when set, otherwise one thread per
    /// core.
    pub fn from_env() -> Self {
        Self::new(threads_from_env())
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

pub fn threads_from_env() -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(cores)
}

impl Executor for PoolExecutor {
    fn run(&self, jobs: &mut [&mut (dyn FnMut() + Send)]) {
        self.pool.install(|| jobs.par_iter_mut().for_each(|job| job()));
    }
}
