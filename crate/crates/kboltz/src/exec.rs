//! Execution strategy for data-parallel stages.
//!
//! The heavy stages of the pipeline (per-spectrum fits, bootstrap replicates,
//! bias sub-ensembles) are independent maps over slices.  With the default
//! `parallel` feature they run on rayon; without it, or with
//! [`Parallelism::Sequential`], they run as plain loops.  Output order always
//! matches input order and all downstream reductions are sequential
//! compensated sums, so the numerical result is identical for every mode and
//! worker count.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parallelism {
    /// Use the global rayon pool (all available cores).
    Auto,
    /// Use a dedicated pool with this many workers.
    Workers(usize),
    /// Plain sequential loop, no thread pool involved.
    Sequential,
}

impl Default for Parallelism {
    fn default() -> Self {
        Parallelism::Auto
    }
}

impl Parallelism {
    /// CLI convention: 0 = auto, 1 = sequential, n = n workers.
    pub fn from_worker_count(workers: usize) -> Self {
        match workers {
            0 => Parallelism::Auto,
            1 => Parallelism::Sequential,
            n => Parallelism::Workers(n),
        }
    }
}

/// Ordered map over a slice under the chosen execution mode.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, U, F>(items: &[T], mode: Parallelism, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    match mode {
        Parallelism::Sequential => items.iter().map(f).collect(),
        Parallelism::Auto => items.par_iter().map(f).collect(),
        Parallelism::Workers(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("failed to build worker pool");
            pool.install(|| items.par_iter().map(f).collect())
        }
    }
}

/// Ordered map over a slice; sequential build, every mode degrades to a loop.
#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, U, F>(items: &[T], _mode: Parallelism, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}
