//! Data-parallel maps over particle populations.
//!
//! With the default `parallel` feature the maps run on the current rayon
//! thread pool; without it they fall back to plain sequential iteration.
//! Outputs preserve input order in both modes and every reduction elsewhere
//! in the crate folds in fixed index order, so results are bit-identical
//! regardless of worker-thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Order-preserving map over items, parallel when the `parallel` feature is
/// enabled.
#[cfg(feature = "parallel")]
pub fn map_items<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_items<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Always-sequential variant, kept available for benchmarking the parallel
/// speedup and for determinism cross-checks.
pub fn map_items_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Order-preserving map over index ranges (for workloads that index into
/// shared state rather than owning items).
#[cfg(feature = "parallel")]
pub fn map_indices<R, F>(count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<R, F>(count: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..count).map(f).collect()
}

pub fn map_indices_seq<R, F>(count: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..count).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<f64> = (0..100).map(|i| i as f64 * 0.37).collect();
        let f = |x: &f64| (x.sin() * 1e6).round();
        assert_eq!(map_items(&items, f), map_items_seq(&items, f));
        let g = |i: usize| (i as f64).sqrt();
        assert_eq!(map_indices(50, g), map_indices_seq(50, g));
    }
}
