//! Block fan-out with a sequential fallback.
//!
//! With the `parallel` feature (default) and `parallel == true` the closure
//! runs on the rayon pool. Results are always returned in index order and the
//! closure sees the same inputs either way, so both paths give bitwise equal
//! output.

use crate::error::Result;

pub fn map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Like [`map_indexed`], reporting the lowest-index failure.
pub fn try_map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_indexed(n, parallel, f).into_iter().collect()
}

/// True when this build can actually fan out.
pub const fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}
