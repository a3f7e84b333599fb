//! Data-parallel map over sample points.
//!
//! Batch verification evaluates independent points, so the outer loops are
//! embarrassingly parallel. With the `parallel` feature (default) the work is
//! spread with rayon; without it the same closure runs sequentially. Results
//! come back in input order either way, keeping reports deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, in parallel when the `parallel` feature is enabled.
pub fn map_points<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Always-sequential variant, used as the comparison baseline in benches.
pub fn map_points_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}
