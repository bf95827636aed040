//! Counter-based random streams.
//!
//! Every work unit (a replicate, a chunk of Monte Carlo trials) gets its own
//! ChaCha8 stream selected by its index, so results do not depend on the
//! order in which units run or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Trials per Monte Carlo work unit.
pub const CHUNK_TRIALS: u64 = 1 << 16;

/// Stream `index` of the generator keyed by `master_seed`.
pub fn stream_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Run `trials` independent trials, each reporting `K` event indicators, and
/// return how often each event occurred.
pub fn count_events<const K: usize, F>(master_seed: u64, trials: u64, trial: F) -> [u64; K]
where
    F: Fn(&mut ChaCha8Rng) -> [bool; K] + Sync,
{
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(master_seed, c);
            let len = CHUNK_TRIALS.min(trials - c * CHUNK_TRIALS);
            let mut counts = [0u64; K];
            for _ in 0..len {
                for (acc, hit) in counts.iter_mut().zip(trial(&mut rng)) {
                    *acc += hit as u64;
                }
            }
            counts
        })
        .reduce(
            || [0u64; K],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

/// Sums and cross products of per-trial observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub trials: u64,
    pub sum: Vec<f64>,
    /// Row-major `k × k` sums of `x_a x_b`.
    pub cross: Vec<f64>,
}

impl Moments {
    fn zero(k: usize) -> Self {
        Self {
            trials: 0,
            sum: vec![0.0; k],
            cross: vec![0.0; k * k],
        }
    }

    fn absorb(&mut self, other: &Moments) {
        self.trials += other.trials;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += b;
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn mean(&self, a: usize) -> f64 {
        self.sum[a] / self.trials as f64
    }

    /// Sample covariance of observations `a` and `b`.
    pub fn cov(&self, a: usize, b: usize) -> f64 {
        let n = self.trials as f64;
        if n < 2.0 {
            return 0.0;
        }
        let k = self.dim();
        (self.cross[a * k + b] - self.sum[a] * self.sum[b] / n) / (n - 1.0)
    }

    /// Standard error of [`Moments::mean`].
    pub fn std_err(&self, a: usize) -> f64 {
        (self.cov(a, a).max(0.0) / self.trials as f64).sqrt()
    }
}

/// Run `trials` trials that each write `k` observations, and accumulate
/// their moments. Chunk totals are combined in chunk order.
pub fn sum_moments<F>(master_seed: u64, trials: u64, k: usize, trial: F) -> Moments
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(master_seed, c);
            let len = CHUNK_TRIALS.min(trials - c * CHUNK_TRIALS);
            let mut acc = Moments::zero(k);
            let mut x = vec![0.0; k];
            for _ in 0..len {
                x.iter_mut().for_each(|v| *v = 0.0);
                trial(&mut rng, &mut x);
                for a in 0..k {
                    acc.sum[a] += x[a];
                    if x[a] != 0.0 {
                        for b in 0..k {
                            acc.cross[a * k + b] += x[a] * x[b];
                        }
                    }
                }
            }
            acc.trials = len;
            acc
        })
        .collect();
    let mut total = Moments::zero(k);
    for p in &parts {
        total.absorb(p);
    }
    total
}
