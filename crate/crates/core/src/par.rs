//! Index-ordered map helpers.
//!
//! With the `parallel` feature the work items run on the rayon pool; without
//! it they run in order on the calling thread. Either way results come back
//! ordered by index, and callers reduce them sequentially, so outputs do not
//! depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluate `f(0..n)` and collect the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Apply `f` to every element of `items` in place.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
}

/// Whether this build dispatches work to rayon.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
