//! Sequential / data-parallel dispatch.
//!
//! Every data-parallel loop in the crate goes through these helpers so the
//! `parallel` feature can be switched off without touching call sites. Work is
//! always split into the same fixed chunks and results are returned in input
//! order, so both execution modes produce bit-identical numbers.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the rayon thread pool when the `parallel` feature is enabled,
    /// otherwise identical to `Sequential`.
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

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel if items.len() > 1 => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// Maps `f` over consecutive chunks of `chunk` indices in `0..len`, preserving
/// chunk order. The last chunk may be shorter.
pub fn map_ranges<R, F>(exec: Execution, len: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    let ranges: Vec<_> = (0..len)
        .step_by(chunk)
        .map(|start| start..(start + chunk).min(len))
        .collect();
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel if ranges.len() > 1 => ranges.into_par_iter().map(f).collect(),
        _ => ranges.into_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map(Execution::Sequential, &items, |x| x * x);
        let par = map(Execution::Parallel, &items, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[999], 999 * 999);
    }

    #[test]
    fn ranges_cover_everything_once() {
        let r = map_ranges(Execution::Parallel, 10, 4, |r| r);
        assert_eq!(r, vec![0..4, 4..8, 8..10]);
        assert!(map_ranges(Execution::Sequential, 0, 4, |r| r).is_empty());
    }
}
