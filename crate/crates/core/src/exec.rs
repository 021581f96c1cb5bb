//! Data-parallel map with a sequential fallback.
//!
//! Outputs are always returned in input order, so reductions performed by
//! the caller are bit-identical whichever path ran.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, on the rayon pool when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    seq_map(items, f)
}

/// Always-sequential counterpart of [`par_map`].
pub fn seq_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R,
{
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_preserve_order() {
        let xs: Vec<u32> = (0..100).collect();
        let a = par_map(&xs, |i, x| (i as u32) * 1000 + x);
        let b = seq_map(&xs, |i, x| (i as u32) * 1000 + x);
        assert_eq!(a, b);
    }
}
