//! Deterministic chunked Monte-Carlo reductions over independent sample
//! pairs.
//!
//! Draws are partitioned into fixed-size chunks, each chunk owning an rng
//! seeded from the base seed and the chunk index. Chunk results are
//! collected in index order and folded sequentially, so the estimate is
//! bit-identical whether chunks run on one thread or many; the `parallel`
//! feature only changes who executes the chunks.

use crate::distributions::{derive_seed, CostSample, TargetDistribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

const CHUNK: u64 = 4096;

/// Scalar Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: u64,
}

/// Vector-valued Monte-Carlo estimate with per-component standard errors.
#[derive(Debug, Clone)]
pub struct McVectorEstimate {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub n: u64,
}

fn chunk_bounds(n_pairs: u64) -> Vec<(u64, u64)> {
    let n_chunks = n_pairs.div_ceil(CHUNK);
    (0..n_chunks)
        .map(|c| (c, (n_pairs - c * CHUNK).min(CHUNK)))
        .collect()
}

fn run_chunks<T, F>(bounds: &[(u64, u64)], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&(u64, u64)) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        bounds.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        bounds.iter().map(f).collect()
    }
}

/// Mean of `f` over `n_pairs` independent pairs from the target.
pub fn mc_pair_mean<F>(
    target: &TargetDistribution,
    n_pairs: u64,
    seed: u64,
    f: F,
) -> McEstimate
where
    F: Fn(&CostSample) -> f64 + Sync,
{
    let bounds = chunk_bounds(n_pairs);
    let partials = run_chunks(&bounds, |&(c, len)| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c));
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..len {
            let v = f(&target.sample_pair(&mut rng));
            sum += v;
            sum_sq += v * v;
        }
        (sum, sum_sq)
    });
    let (sum, sum_sq) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), &(s, q)| (a + s, b + q));
    let n = n_pairs as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    McEstimate {
        mean,
        std_err: (var / n).sqrt(),
        n: n_pairs,
    }
}

/// Componentwise mean of a vector-valued `f` over independent pairs.
pub fn mc_pair_vector_mean<F>(
    target: &TargetDistribution,
    n_pairs: u64,
    seed: u64,
    dim: usize,
    f: F,
) -> McVectorEstimate
where
    F: Fn(&CostSample) -> Vec<f64> + Sync,
{
    let bounds = chunk_bounds(n_pairs);
    let partials = run_chunks(&bounds, |&(c, len)| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c));
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        for _ in 0..len {
            let v = f(&target.sample_pair(&mut rng));
            for i in 0..dim {
                sum[i] += v[i];
                sum_sq[i] += v[i] * v[i];
            }
        }
        (sum, sum_sq)
    });
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for (s, q) in &partials {
        for i in 0..dim {
            sum[i] += s[i];
            sum_sq[i] += q[i];
        }
    }
    let n = n_pairs as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_err: Vec<f64> = (0..dim)
        .map(|i| ((sum_sq[i] / n - mean[i] * mean[i]).max(0.0) / n).sqrt())
        .collect();
    McVectorEstimate {
        mean,
        std_err,
        n: n_pairs,
    }
}

/// Monte-Carlo estimate of the embedding vector m_i = E k(xi, x_i).
pub fn mc_embedding(
    target: &TargetDistribution,
    spec: &crate::kernel::KernelSpec,
    points: &[f64],
    n_draws: u64,
    seed: u64,
) -> Vec<f64> {
    let dim = points.len();
    let est = mc_pair_vector_mean(target, n_draws.div_ceil(2), seed, dim, |s| {
        points
            .iter()
            .map(|&x| {
                0.5 * (crate::kernel::eval(spec, s.xi, x)
                    + crate::kernel::eval(spec, s.xi_prime, x))
            })
            .collect()
    });
    est.mean
}
