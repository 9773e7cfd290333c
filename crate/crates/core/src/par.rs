//! Order-preserving parallel map.
//!
//! Results are always collected in input order, so output never depends on
//! the thread count. Reductions are done by callers, sequentially.

#[cfg(feature = "parallel")]
pub fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}

/// Runs `f` on a dedicated pool of `threads` workers; 0 means one per core.
#[cfg(feature = "parallel")]
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> crate::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| crate::LcgError::Config(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<T>(_threads: usize, f: impl FnOnce() -> T) -> crate::Result<T> {
    Ok(f())
}
