//! Data-parallel maps over task indices.
//!
//! With the `parallel` feature (default) the work is spread over the rayon
//! pool; without it everything runs on the calling thread. Results are always
//! returned in index order, and reductions over them are done sequentially in
//! that order, so outputs are bit-identical between the two modes.

/// How a batch of independent tasks is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential execution when built without `parallel`.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(task)` under the default execution mode.
pub fn map_range<T, F>(n: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_range_with(Execution::default(), n, task)
}

pub fn map_range_with<T, F>(mode: Execution, n: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(task).collect();
    }
    let _ = mode;
    (0..n).map(task).collect()
}

/// Maps `task` over `items`, preserving order.
pub fn map_slice<I, T, F>(items: &[I], task: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    map_range(items.len(), |i| task(&items[i]))
}

/// Sum of `values` with Neumaier compensation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
