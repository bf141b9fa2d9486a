//! Bounded worker pool. The size comes from `CROSSTASK_WORKERS` when set,
//! otherwise from rayon's default (one per logical CPU).

use crate::error::{CliError, Result};

pub const WORKERS_ENV: &str = "CROSSTASK_WORKERS";

pub fn worker_count() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

/// Run `f` inside a dedicated pool sized by [`worker_count`].
pub fn run<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
