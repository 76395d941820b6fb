//! Index-ordered parallel map. Results are collected by index, so output
//! never depends on the number of worker threads.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// Run `f` on a pool with `threads` workers (`0` = library default).
#[cfg(feature = "parallel")]
pub fn with_threads<T: Send, F: FnOnce() -> T + Send>(threads: usize, f: F) -> T {
    if threads == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<T, F: FnOnce() -> T>(_threads: usize, f: F) -> T {
    f()
}
