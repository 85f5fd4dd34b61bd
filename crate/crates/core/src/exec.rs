//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (on by default) work is spread over the rayon
//! pool; without it every call runs on the current thread. Results are
//! identical either way: work items are indexed and each derives its own RNG
//! stream from that index.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// RNG used for every stochastic operation the crate drives itself.
pub type StreamRng = ChaCha12Rng;

/// Independent stream `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Exec {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Exec {
    /// `(0..n).map(f)` collected in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
        }
    }

    /// Maps over fixed-size chunks of `items` and folds the partial results
    /// with `reduce`, starting from `identity()`.
    pub fn chunked_reduce<I, T, M, R, Z>(
        self,
        items: &[I],
        chunk: usize,
        identity: Z,
        map: M,
        reduce: R,
    ) -> T
    where
        I: Sync,
        T: Send,
        Z: Fn() -> T + Sync + Send,
        M: Fn(&[I]) -> T + Sync + Send,
        R: Fn(T, T) -> T + Sync + Send,
    {
        let chunk = chunk.max(1);
        match self {
            Exec::Sequential => items.chunks(chunk).map(map).fold(identity(), reduce),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_chunks(chunk).map(map).reduce(identity, reduce),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = stream_rng(7, 0).random();
        let b: u64 = stream_rng(7, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, stream_rng(7, 0).random::<u64>());
    }

    #[test]
    fn map_preserves_order() {
        let v = Exec::default().map(100, |i| i * 2);
        assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn chunked_reduce_sums() {
        let items: Vec<u64> = (1..=1000).collect();
        let s = Exec::default().chunked_reduce(&items, 64, || 0, |c| c.iter().sum(), |a, b| a + b);
        assert_eq!(s, 500_500);
        let s = Exec::Sequential.chunked_reduce(&items, 64, || 0, |c| c.iter().sum(), |a, b| a + b);
        assert_eq!(s, 500_500);
    }
}
