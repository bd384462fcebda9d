//! Data-parallel backend.
//!
//! With the `parallel` feature (default) the per-index maps run on rayon;
//! without it they run as plain loops. Every map produces one value per index
//! from a closure that is itself sequential, and every cross-index reduction
//! goes through [`pairwise_sum`] on the collected vector, so results do not
//! depend on the backend or on the number of worker threads.

/// Evaluates `f(i)` for `i in 0..n` and collects the results in index order.
#[cfg(feature = "parallel")]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Below this many scalar operations per map the dispatch is done inline.
pub const PAR_MIN_WORK: usize = 1 << 14;

/// Like [`map_range`], but runs inline when `n * work_per_item` is small.
/// The output is identical either way.
pub fn map_range_sized<T, F>(n: usize, work_per_item: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if n.saturating_mul(work_per_item) < PAR_MIN_WORK {
        (0..n).map(f).collect()
    } else {
        map_range(n, f)
    }
}

/// Maps over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_range(items.len(), |i| f(&items[i]))
}

/// Runs `op` on a pool with `threads` workers (`0` = rayon default).
///
/// Without the `parallel` feature this simply calls `op`.
#[cfg(feature = "parallel")]
pub fn with_threads<R, F>(threads: usize, op: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(op),
        Err(e) => {
            log::warn!("could not build a {threads}-thread pool ({e}); using the global pool");
            op()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R, F>(_threads: usize, op: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    op()
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

const PAIRWISE_BLOCK: usize = 8;

/// Sum with a fixed binary-tree association order.
///
/// The split points depend only on the length, so the result is a pure
/// function of the input slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Maximum of a slice, ignoring NaN; `-inf` for an empty slice.
pub fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}
