//! Deterministic random streams.
//!
//! All randomness in a run flows from a single root seed. Independent
//! consumers (one compressor per worker, one batch sampler per worker, the
//! master's participation sampler, ...) each own a stream derived from the
//! root seed by a counter offset, so runs are bit-reproducible and adding a
//! consumer never perturbs the draws seen by the others.

use crate::vector::DenseVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream `stream_id` of the generator family rooted at `seed`.
    pub fn substream(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomStream { rng }
    }

    /// Uniform draw from [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        debug_assert!((0.0..=1.0).contains(&p));
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normal_vec(&mut self, dim: usize) -> DenseVector {
        DenseVector::from_vec((0..dim).map(|_| self.normal()).collect())
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// `k` distinct indices from `0..n`, uniform without replacement,
    /// returned in ascending order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        let mut taken = pool[..k].to_vec();
        taken.sort_unstable();
        taken
    }
}
