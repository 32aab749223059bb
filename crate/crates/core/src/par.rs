//! Data-parallel map helpers.
//!
//! With the `parallel` feature (default) the hot loops run on the ambient
//! rayon pool; without it they run sequentially. Either way results come back
//! in input order, so downstream reductions are identical for any thread
//! count.

/// Which execution path a sweep should take.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Parallel when the crate is built with the `parallel` feature,
    /// sequential otherwise.
    #[default]
    Parallel,
}

/// `(0..n).map(f).collect()` in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Exec::Sequential => (0..n).map(f).collect(),
        Exec::Parallel => par_map_indexed(n, f),
    }
}

/// Maps over a slice, preserving order.
pub fn map_slice<S, T, F>(exec: Exec, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indexed(exec, items.len(), |i| f(&items[i]))
}

/// Index of the first item satisfying `pred`, scanning in index order.
pub fn position_first<F>(exec: Exec, n: usize, pred: F) -> Option<usize>
where
    F: Fn(usize) -> bool + Sync + Send,
{
    match exec {
        Exec::Sequential => (0..n).find(|&i| pred(i)),
        Exec::Parallel => par_position_first(n, pred),
    }
}

#[cfg(feature = "parallel")]
fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_position_first<F>(n: usize, pred: F) -> Option<usize>
where
    F: Fn(usize) -> bool + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().position_first(pred)
}

#[cfg(not(feature = "parallel"))]
fn par_position_first<F>(n: usize, pred: F) -> Option<usize>
where
    F: Fn(usize) -> bool + Sync + Send,
{
    (0..n).find(|&i| pred(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree() {
        let seq = map_indexed(Exec::Sequential, 1000, |i| (i * i) % 97);
        let par = map_indexed(Exec::Parallel, 1000, |i| (i * i) % 97);
        assert_eq!(seq, par);
    }

    #[test]
    fn first_position_is_lowest_index() {
        for exec in [Exec::Sequential, Exec::Parallel] {
            assert_eq!(position_first(exec, 10_000, |i| i % 1000 == 999), Some(999));
            assert_eq!(position_first(exec, 10, |_| false), None);
        }
    }
}
