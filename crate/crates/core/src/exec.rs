//! Chunked execution policy.
//!
//! Every batch loop in the crate is split into fixed-size chunks whose
//! results are combined in chunk order, so the sequential and parallel
//! policies produce bit-identical output.

use std::ops::Range;

/// Rows per chunk used by the evaluation and training loops.
pub const DEFAULT_CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses the ambient rayon pool. Falls back to sequential execution when
    /// the crate is built without the `parallel` feature.
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
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    /// Applies `f` to consecutive ranges of `0..len` of at most `chunk`
    /// elements and returns the results in range order.
    pub fn map_chunks<T, F>(self, len: usize, chunk: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<usize>) -> T + Sync + Send,
    {
        let chunk = chunk.max(1);
        let n_chunks = len.div_ceil(chunk);
        let range_of = |c: usize| c * chunk..((c + 1) * chunk).min(len);
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n_chunks).into_par_iter().map(|c| f(range_of(c))).collect()
            }
            _ => (0..n_chunks).map(|c| f(range_of(c))).collect(),
        }
    }

    /// Applies `f` to each index in `0..n`, results in index order.
    pub fn map_indices<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.map_chunks(n, 1, |r| f(r.start))
    }
}

/// Sizes the global worker pool. Only the first call takes effect; later
/// calls and builds without the `parallel` feature are no-ops.
pub fn init_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}
