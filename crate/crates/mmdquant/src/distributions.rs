//! Benchmark target distributions: seeded sampling by inverse-CDF, density,
//! quantile, and closed-form kernel embeddings where available.
//!
//! Sampling draws a uniform variate and applies the quantile transform, so
//! a (seed, family, parameters) triple fully determines the stream.

use crate::closedform::NormalTargetSpec;
use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;
use statrs::function::erf::erf;

/// An independent pair drawn from the product measure P x P.
#[derive(Debug, Clone, Copy)]
pub struct CostSample {
    pub xi: f64,
    pub xi_prime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum TargetDistribution {
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
}

impl TargetDistribution {
    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "normal(mean={mean}, std={std})"
            )));
        }
        Ok(Self::Normal { mean, std })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("uniform({lo}, {hi})")));
        }
        Ok(Self::Uniform { lo, hi })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!("exponential({rate})")));
        }
        Ok(Self::Exponential { rate })
    }

    /// Inverse CDF at u in (0, 1).
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::InvalidParameter(format!("quantile level {u}")));
        }
        Ok(match *self {
            Self::Normal { mean, std } => {
                let n = statrs::distribution::Normal::new(mean, std).expect("validated");
                n.inverse_cdf(u)
            }
            Self::Uniform { lo, hi } => lo + (hi - lo) * u,
            Self::Exponential { rate } => -(-u).ln_1p() / rate,
        })
    }

    /// Probability density at x.
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mean, std } => {
                let z = (x - mean) / std;
                (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * std)
            }
            Self::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Self::Exponential { rate } => {
                if x >= 0.0 {
                    rate * (-rate * x).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// One draw by the quantile transform; advances the rng deterministically.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        // open-interval uniform; the endpoints have measure zero but would
        // break the quantile transform
        let mut u: f64 = rng.gen();
        while u <= 0.0 || u >= 1.0 {
            u = rng.gen();
        }
        self.quantile(u).expect("u in (0,1)")
    }

    /// Two independent draws from P.
    pub fn sample_pair<R: Rng>(&self, rng: &mut R) -> CostSample {
        let xi = self.sample(rng);
        let xi_prime = self.sample(rng);
        CostSample { xi, xi_prime }
    }

    /// E k(xi, x) in closed form when available, else None (callers fall
    /// back to Monte Carlo).
    pub fn analytic_embedding(&self, spec: &KernelSpec, x: f64) -> Option<f64> {
        let ell = spec.bandwidth_ell;
        let gaussian = spec.family == KernelFamily::Gaussian || spec.smoothness_nu.is_infinite();
        let laplace = !gaussian && spec.smoothness_nu == 0.5;
        match *self {
            Self::Normal { mean, std } if gaussian => {
                let t = NormalTargetSpec::new(mean, std, ell).ok()?;
                Some(t.embedding_at(x))
            }
            Self::Uniform { lo, hi } if gaussian => {
                // difference of standard normal CDFs, scaled by the density
                let phi = |z: f64| 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
                Some((phi((hi - x) / ell) - phi((lo - x) / ell)) / (hi - lo))
            }
            Self::Uniform { lo, hi } if laplace => {
                // Laplace CDF difference
                let cdf = |t: f64| {
                    if t <= 0.0 {
                        0.5 * (t / ell).exp()
                    } else {
                        1.0 - 0.5 * (-t / ell).exp()
                    }
                };
                Some((cdf(hi - x) - cdf(lo - x)) / (hi - lo))
            }
            Self::Exponential { rate } if laplace => {
                let a = 1.0 / ell;
                if x < 0.0 {
                    Some(rate * (a * x).exp() / (a + rate) / (2.0 * ell))
                } else {
                    // split the integral at x
                    let ratio = if (a - rate).abs() < 1e-12 {
                        x * (0.5 * (a - rate) * x).exp() // midpoint-accurate limit form
                    } else {
                        (((a - rate) * x).exp_m1()) / (a - rate)
                    };
                    let i1 = rate * (-a * x).exp() * ratio;
                    let i2 = rate * (-rate * x).exp() / (a + rate);
                    Some((i1 + i2) / (2.0 * ell))
                }
            }
            _ => None,
        }
    }

    /// Support interval useful for plotting and quadrature truncation.
    pub fn plot_range(&self) -> (f64, f64) {
        match *self {
            Self::Normal { mean, std } => (mean - 4.0 * std, mean + 4.0 * std),
            Self::Uniform { lo, hi } => {
                let pad = 0.15 * (hi - lo);
                (lo - pad, hi + pad)
            }
            Self::Exponential { rate } => (-0.5 / rate, 8.0 / rate),
        }
    }
}

/// Per-run seed derivation for concurrent runs.
pub fn derive_seed(base_seed: u64, run_index: u64) -> u64 {
    base_seed ^ run_index
}
