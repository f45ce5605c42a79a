//! Data-parallel map over independent work items.
//!
//! With the default `parallel` feature the batch loops (rollouts,
//! episodes, batch scoring) fan out over rayon; without it everything
//! runs sequentially with identical output order. Both entry points are
//! always available so benches can compare them directly.

/// Sequential map, kept as the fallback path and the bench baseline.
pub fn map_sequential<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Rayon map; output order matches input order.
#[cfg(feature = "parallel")]
pub fn map_parallel<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Maps with rayon when the `parallel` feature is on and `parallel` is
/// requested, sequentially otherwise.
pub fn map_items<T, U, F>(items: &[T], parallel: bool, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel {
            return map_parallel(items, f);
        }
    }
    let _ = parallel;
    map_sequential(items, f)
}
