//! Execution strategy for the data-parallel inner loops.
//!
//! Every loop in the crate goes through [`map_indices`] or [`chunked_sum`].
//! Both produce bit-identical results under either [`Exec`] variant: maps are
//! per-index pure functions, and sums are reduced over a fixed chunk partition
//! whose partial sums are combined left to right.

/// Number of indices summed sequentially per chunk in [`chunked_sum`].
pub const SUM_CHUNK: usize = 4096;

/// How an operation walks its pixels, patches or samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled and falls
    /// back to sequential execution otherwise.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `(0..n).map(f).collect()` under the chosen strategy.
pub fn map_indices<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Sum of `f(i)` for `i in 0..n`, reduced deterministically.
pub fn chunked_sum<F>(exec: Exec, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(SUM_CHUNK);
    let partials = map_indices(exec, chunks, |c| {
        let start = c * SUM_CHUNK;
        let end = (start + SUM_CHUNK).min(n);
        (start..end).map(&f).sum::<f64>()
    });
    partials.into_iter().sum()
}
