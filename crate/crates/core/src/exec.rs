//! Execution policy for the data-parallel kernels.
//!
//! Every kernel in this crate partitions its output by rows and computes each
//! row with a fixed, sequential accumulation order. Running a kernel with
//! [`Execution::Parallel`] therefore produces bit-identical results to
//! [`Execution::Sequential`]; only the wall-clock time differs.
//!
//! Without the `parallel` cargo feature, `Parallel` silently falls back to the
//! sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Outputs smaller than this many scalars are always computed sequentially.
pub const PARALLEL_THRESHOLD: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// True when this policy will actually fan out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Calls `f(row_index, row)` for every `row_len`-sized chunk of `out`.
pub(crate) fn for_each_row<F>(exec: Execution, out: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    if row_len == 0 || out.is_empty() {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && out.len() >= PARALLEL_THRESHOLD {
        out.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = exec;
    out.chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
}

/// Maps `f` over `0..n`, preserving index order in the returned vector.
pub fn map_indices<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}
