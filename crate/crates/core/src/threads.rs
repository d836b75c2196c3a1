//! Thread pool sizing from `SEE_THREADS`.

use crate::error::{Result, SeeError};

pub const THREADS_VAR: &str = "SEE_THREADS";

/// Thread count requested through the environment; `0` or unset means
/// one thread per core.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| SeeError::Config(format!("{THREADS_VAR} must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

/// Dedicated pool with `threads` workers (`0` = automatic).
pub fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SeeError::Config(format!("thread pool: {e}")))
}
