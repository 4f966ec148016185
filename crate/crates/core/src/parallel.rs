//! Tile scheduling. With the `parallel` feature tiles run on a rayon pool;
//! without it, or with a thread hint of 1, they run in order on the caller.

use crate::error::Result;

#[cfg(feature = "parallel")]
pub(crate) fn map_tiles<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    if threads == 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| crate::error::Error::Config(format!("thread pool: {e}")))?;
    // collect() on an indexed iterator keeps input order
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_tiles<T, R, F>(items: &[T], _threads: usize, f: F) -> Result<Vec<R>>
where
    F: Fn(&T) -> R,
{
    Ok(items.iter().map(f).collect())
}

/// Whether this build can run tiles concurrently.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
