//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) independent work items are fanned
//! out over a rayon pool; without it, or when `jobs == 1`, they run in order
//! on the calling thread. Results are always returned in input order, so the
//! output never depends on scheduling.

/// Degree of parallelism for experiment fan-out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Jobs {
    Sequential,
    /// Use the global rayon pool.
    #[default]
    All,
    /// Use a dedicated pool with at most this many threads.
    Limit(usize),
}

impl Jobs {
    pub fn from_count(n: usize) -> Self {
        match n {
            0 => Jobs::All,
            1 => Jobs::Sequential,
            n => Jobs::Limit(n),
        }
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map_ordered<T, R, F>(items: Vec<T>, jobs: Jobs, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match jobs {
            Jobs::Sequential => items.into_iter().map(f).collect(),
            Jobs::All => items.into_par_iter().map(f).collect(),
            Jobs::Limit(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| items.into_par_iter().map(f).collect()),
                Err(e) => {
                    log::warn!("could not build a {n}-thread pool ({e}); running sequentially");
                    items.into_iter().map(f).collect()
                }
            },
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        items.into_iter().map(f).collect()
    }
}

/// Sums `f(i)` over `0..n` where each term is an integer count vector of
/// length `width`. Integer reduction keeps the result order-independent.
pub fn sum_counts<F>(n: usize, width: usize, f: F) -> Vec<u64>
where
    F: Fn(usize) -> usize + Send + Sync,
{
    let fold = |mut acc: Vec<u64>, i: usize| {
        acc[f(i)] += 1;
        acc
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .fold(|| vec![0u64; width], fold)
            .reduce(
                || vec![0u64; width],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).fold(vec![0u64; width], fold)
    }
}
