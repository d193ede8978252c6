//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the per-record loops run on the rayon
//! pool. Results are order-preserving and integer-exact either way, so the
//! two modes are interchangeable.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// The default is parallel when the `parallel` feature is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Execution {
    /// Order-preserving map.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
        }
    }

    /// Counts how many items land in each of `len` slots. Items mapped to
    /// `None` are skipped.
    pub fn histogram<T, F>(self, items: &[T], len: usize, slot: F) -> Vec<u64>
    where
        T: Sync,
        F: Fn(&T) -> Option<usize> + Sync + Send,
    {
        match self {
            Execution::Sequential => count_slots(items, len, &slot),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                // One private histogram per worker, not per rayon split: the
                // slot vector can be far larger than the input.
                let workers = rayon::current_num_threads().max(1);
                let chunk = items.len().div_ceil(workers).max(4096);
                items
                    .par_chunks(chunk)
                    .map(|part| count_slots(part, len, &slot))
                    .reduce_with(|mut a, b| {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                        a
                    })
                    .unwrap_or_else(|| vec![0u64; len])
            }
        }
    }
}

fn count_slots<T, F>(items: &[T], len: usize, slot: &F) -> Vec<u64>
where
    F: Fn(&T) -> Option<usize>,
{
    let mut acc = vec![0u64; len];
    for i in items.iter().filter_map(slot) {
        acc[i] += 1;
    }
    acc
}
