use rayon::prelude::*;

use crate::error::{CliError, CliResult};

/// Worker cap; unset or 0 lets rayon pick.
pub const THREADS_VAR: &str = "BM_THREADS";

pub fn thread_count() -> CliResult<usize> {
    match std::env::var(THREADS_VAR) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("{THREADS_VAR}={v:?} is not a thread count"))),
        _ => Ok(0),
    }
}

pub fn pool() -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| CliError::input(format!("cannot start worker pool: {e}")))
}

/// Evaluates `f(0..n)` on the pool and returns results in index order.
pub fn map_cells<T, E>(
    pool: &rayon::ThreadPool,
    n: usize,
    f: impl Fn(usize) -> Result<T, E> + Sync,
) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
{
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}
