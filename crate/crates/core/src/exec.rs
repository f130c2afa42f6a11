//! Execution strategy for the data-parallel loops.
//!
//! Every parallel loop in the crate goes through [`Exec`]. Work items are
//! indexed, results are collected in index order and floating-point
//! reductions are performed sequentially afterwards, so the output of a
//! computation never depends on the strategy or on the size of the thread
//! pool.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Exec::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Evaluates `f(0), f(1), …, f(n-1)` and returns the results in order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
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

    /// Splits `0..n` into fixed-size chunks, evaluates `f` on each and adds
    /// the integer vectors element-wise. Chunk boundaries depend only on
    /// `n` and `chunk`, and integer addition is associative, so the sum is
    /// the same for every strategy.
    pub fn sum_counts<F>(self, n: usize, chunk: usize, width: usize, f: F) -> Vec<u64>
    where
        F: Fn(std::ops::Range<usize>) -> Vec<u64> + Sync + Send,
    {
        let chunk = chunk.max(1);
        let n_chunks = n.div_ceil(chunk);
        let partials = self.map_indexed(n_chunks, |c| {
            let start = c * chunk;
            f(start..(start + chunk).min(n))
        });
        let mut total = vec![0u64; width];
        for part in partials {
            debug_assert_eq!(part.len(), width);
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
        total
    }

    /// Like [`Exec::sum_counts`] for floating-point vectors. The partial
    /// vectors are added in chunk order, which keeps the result bit-stable.
    pub fn sum_f64<F>(self, n: usize, chunk: usize, width: usize, f: F) -> Vec<f64>
    where
        F: Fn(std::ops::Range<usize>) -> Vec<f64> + Sync + Send,
    {
        let chunk = chunk.max(1);
        let n_chunks = n.div_ceil(chunk);
        let partials = self.map_indexed(n_chunks, |c| {
            let start = c * chunk;
            f(start..(start + chunk).min(n))
        });
        let mut total = vec![0.0; width];
        for part in partials {
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_keeps_order() {
        let v = Exec::default().map_indexed(1000, |i| i * 3);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 3 * i));
    }

    #[test]
    fn strategies_agree_on_float_sums() {
        let f = |r: std::ops::Range<usize>| {
            let mut acc = vec![0.0; 2];
            for i in r {
                acc[0] += (i as f64).sqrt();
                acc[1] += 1.0 / (1.0 + i as f64);
            }
            acc
        };
        let seq = Exec::Sequential.sum_f64(10_001, 64, 2, f);
        let def = Exec::default().sum_f64(10_001, 64, 2, f);
        assert_eq!(seq, def);
    }

    #[test]
    fn empty_range_gives_zero_counts() {
        let v = Exec::default().sum_counts(0, 16, 3, |_| vec![1, 1, 1]);
        assert_eq!(v, vec![0, 0, 0]);
    }
}
