//! Rayon-backed window executor.

use pats_core::WindowExecutor;
use rayon::prelude::*;

/// Environment variable capping worker threads; 0 or unset means one per core.
pub const THREADS_ENV: &str = "PATS_THREADS";

pub struct ThreadPoolExecutor {
    pool: rayon::ThreadPool,
}

impl ThreadPoolExecutor {
    /// `threads == 0` picks rayon's default.
    pub fn new(threads: usize) -> Result<Self, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self { pool })
    }

    pub fn from_env() -> Result<Self, String> {
        Self::new(threads_from_env()?)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

pub fn threads_from_env() -> Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")),
        Err(_) => Ok(0),
    }
}

impl WindowExecutor for ThreadPoolExecutor {
    fn execute<R, F>(&self, jobs: usize, job: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync,
    {
        let job = &job;
        self.pool.install(|| (0..jobs).into_par_iter().map(job).collect())
    }
}
