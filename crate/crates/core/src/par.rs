//! Sequential or rayon-parallel maps over independent work items.
//!
//! Without the `parallel` feature every map runs sequentially and the
//! `parallel` flag is ignored.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether the `parallel` feature was compiled in.
pub const PARALLEL_AVAILABLE: bool = cfg!(feature = "parallel");

/// `f` over `0..n`, stopping at the first error in index order.
pub fn try_map_indexed<R, E, F>(n: usize, parallel: bool, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel && n > 1 {
        let all: Vec<Result<R, E>> = (0..n).into_par_iter().map(f).collect();
        return all.into_iter().collect();
    }
    let _ = parallel;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(f(i)?);
    }
    Ok(out)
}

/// `f` over `0..n`.
pub fn map_indexed<R, F>(n: usize, parallel: bool, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel && n > 1 {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}
