//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel loop in the crate goes through the helpers below. Work is
//! split into fixed-size chunks whose boundaries never depend on the number
//! of worker threads, and every random draw is keyed by its chunk index, so
//! parallel and sequential runs produce bit-identical output.
//!
//! With the `parallel` feature disabled the helpers compile down to plain
//! iterator loops and [`Execution::Parallel`] behaves like
//! [`Execution::Sequential`].

use serde::{Deserialize, Serialize};

/// Number of samples per work chunk. Part of the determinism contract:
/// changing it changes every seeded stream.
pub const CHUNK_LEN: usize = 1 << 14;

/// How the orchestrator schedules data-parallel work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    /// Use the global rayon pool (when compiled with `parallel`).
    #[default]
    Parallel,
    /// Run everything on the calling thread.
    Sequential,
}

impl Execution {
    /// Runs `f` under this policy.
    pub fn install<R, F>(self, f: F) -> R
    where
        R: Send,
        F: FnOnce() -> R + Send,
    {
        match self {
            Execution::Parallel => f(),
            Execution::Sequential => {
                #[cfg(feature = "parallel")]
                {
                    match rayon::ThreadPoolBuilder::new().num_threads(1).build() {
                        Ok(pool) => pool.install(f),
                        Err(_) => f(),
                    }
                }
                #[cfg(not(feature = "parallel"))]
                {
                    f()
                }
            }
        }
    }

    /// Worker threads available under this policy.
    pub fn threads(self) -> usize {
        match self {
            Execution::Sequential => 1,
            Execution::Parallel => current_threads(),
        }
    }
}

/// Threads in the ambient pool.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Calls `f(chunk_index, chunk)` for every `CHUNK_LEN` slice of `data`.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(CHUNK_LEN)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(CHUNK_LEN)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
}

/// Like [`for_each_chunk_mut`] over two equal-length buffers in lockstep.
pub(crate) fn for_each_chunk_pair_mut<T, U, F>(a: &mut [T], b: &mut [U], f: F)
where
    T: Send,
    U: Send,
    F: Fn(usize, &mut [T], &mut [U]) + Send + Sync,
{
    debug_assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        a.par_chunks_mut(CHUNK_LEN)
            .zip(b.par_chunks_mut(CHUNK_LEN))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
    }
    #[cfg(not(feature = "parallel"))]
    {
        a.chunks_mut(CHUNK_LEN)
            .zip(b.chunks_mut(CHUNK_LEN))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
    }
}

/// Maps every `CHUNK_LEN` slice of `data` and returns the results in chunk
/// order. Callers fold the returned partials sequentially, which keeps
/// floating-point reductions independent of scheduling.
pub(crate) fn map_chunks<T, R, F>(data: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks(CHUNK_LEN)
            .enumerate()
            .map(|(i, c)| f(i, c))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks(CHUNK_LEN)
            .enumerate()
            .map(|(i, c)| f(i, c))
            .collect()
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps owned items, preserving order.
pub fn map_vec<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_partials_are_schedule_independent() {
        let data: Vec<f64> = (0..100_000).map(|i| (i as f64).sin()).collect();
        let par: f64 = Execution::Parallel
            .install(|| map_chunks(&data, |_, c| c.iter().sum::<f64>()))
            .into_iter()
            .sum();
        let seq: f64 = Execution::Sequential
            .install(|| map_chunks(&data, |_, c| c.iter().sum::<f64>()))
            .into_iter()
            .sum();
        assert_eq!(par.to_bits(), seq.to_bits());
    }

    #[test]
    fn map_indices_keeps_order() {
        let v = map_indices(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }
}
