//! Execution strategy for the data-parallel loops of the crate.
//!
//! Every hot loop (V-metric rows, CLIME columns, Monte-Carlo replications)
//! goes through [`Execution::map`]. With the `parallel` feature the
//! `Parallel` variant runs on the rayon pool; without it, both variants run
//! sequentially. Results are always returned in index order, so the output
//! never depends on the strategy.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `true` when this strategy actually runs on a thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Evaluates `f(0), …, f(n-1)` and collects the results in order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}
