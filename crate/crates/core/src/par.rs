//! Data-parallel helpers. With the `parallel` feature (default) work is
//! spread over the rayon pool; without it, or with
//! [`Parallelism::Sequential`], everything runs on the calling thread.
//! Results are always returned in input order, so output does not depend
//! on the schedule.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// `(0..n).map(f)` collected in order.
pub fn map_range<R, F>(n: usize, parallelism: Parallelism, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallelism.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallelism;
    (0..n).map(f).collect()
}

/// `items.iter().map(f)` collected in order.
pub fn map_slice<T, R, F>(items: &[T], parallelism: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallelism.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = parallelism;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree_and_keep_order() {
        let seq = map_range(1000, Parallelism::Sequential, |i| (i as f64).sqrt());
        let par = map_range(1000, Parallelism::Parallel, |i| (i as f64).sqrt());
        assert_eq!(seq, par);
        let items: Vec<u32> = (0..257).collect();
        assert_eq!(
            map_slice(&items, Parallelism::Parallel, |v| v * 3),
            map_slice(&items, Parallelism::Sequential, |v| v * 3)
        );
    }
}
