//! Execution helpers shared by the pipeline crates.
//!
//! With the `parallel` feature (default) the `map_*` functions fan out over
//! rayon; without it they run sequentially. Every call site is a pure
//! indexed map, so the two modes produce bit-identical results and the
//! feature flag only changes wall-clock time. Reductions that are sensitive
//! to float summation order must not go through this module.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map over a slice, preserving order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
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

/// Map over `0..n`, preserving index order.
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Sequential version of [`map_slice`], always available so benches can
/// compare the two lanes in a single run.
pub fn map_slice_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Sequential version of [`map_indices`].
pub fn map_indices_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map_slice(&xs, |x| x * x + 1);
        let b = map_slice_seq(&xs, |x| x * x + 1);
        assert_eq!(a, b);
        let c = map_indices(1000, |i| (i as u64) * 3);
        let d = map_indices_seq(1000, |i| (i as u64) * 3);
        assert_eq!(c, d);
    }
}
