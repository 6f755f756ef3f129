//! Data-parallel helpers with a sequential fallback.
//!
//! Every batch-style loop in the crate (seed sweeps, pairwise smoothness
//! sums, probe sampling) goes through [`Exec`]. With the `parallel` feature
//! disabled, [`Exec::Parallel`] silently degrades to the sequential path, so
//! results are identical either way: reductions are always combined in input
//! order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether work will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Sums `f(i)` for `i in 0..n`. Partial sums are gathered per index and
    /// added left to right so the result does not depend on scheduling.
    pub fn sum_range<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        self.map_range(n, f).into_iter().sum()
    }
}

/// Runs `f` inside a pool of `jobs` threads when parallelism is compiled in.
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(jobs) = jobs.filter(|&j| j > 0) {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            return pool.install(f);
        }
    }
    let _ = jobs;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let a = Exec::Sequential.sum_range(xs.len(), |i| xs[i] * xs[i]);
        let b = Exec::Parallel.sum_range(xs.len(), |i| xs[i] * xs[i]);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(
            Exec::Sequential.map(&xs, |x| x * 2.0),
            Exec::Parallel.map(&xs, |x| x * 2.0)
        );
    }
}
