//! Fully deterministic pipeline for a normal target N(mean, std^2) under a
//! Gaussian kernel: analytic embedding, closed-form MMD^2, its analytic
//! gradient in the support points, and a line-search descent optimizer.
//! No sampling anywhere on this path.

use crate::error::Result;
use crate::kernel::{self, KernelSpec};
use crate::linalg::{self, KernelSystem};
use crate::weights::{self, Quantization};
use serde::{Deserialize, Serialize};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Normal target paired with a Gaussian kernel bandwidth.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormalTargetSpec {
    pub mean: f64,
    pub std: f64,
    pub kernel_ell: f64,
}

/// Which weight formula closes the MMD^2 expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Signed,
    SumToOne,
}

impl NormalTargetSpec {
    pub fn new(mean: f64, std: f64, kernel_ell: f64) -> Result<Self> {
        if !(std > 0.0) || !(kernel_ell > 0.0) || !mean.is_finite() {
            return Err(crate::error::Error::InvalidParameter(format!(
                "normal target (mean={mean}, std={std}, ell={kernel_ell})"
            )));
        }
        Ok(Self { mean, std, kernel_ell })
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::gaussian(self.kernel_ell).expect("validated at construction")
    }

    /// Embedding P_k(x): normal density with variance std^2 + ell^2.
    pub fn embedding_at(&self, x: f64) -> f64 {
        let v = self.std * self.std + self.kernel_ell * self.kernel_ell;
        (-(x - self.mean) * (x - self.mean) / (2.0 * v)).exp() / (TWO_PI * v).sqrt()
    }

    /// Derivative of the embedding in x.
    pub fn embedding_grad_at(&self, x: f64) -> f64 {
        let v = self.std * self.std + self.kernel_ell * self.kernel_ell;
        -(x - self.mean) / v * self.embedding_at(x)
    }

    /// Self energy of the target: 1 / sqrt(2 pi (2 std^2 + ell^2)).
    pub fn self_energy(&self) -> f64 {
        1.0 / (TWO_PI * (2.0 * self.std * self.std + self.kernel_ell * self.kernel_ell)).sqrt()
    }

    fn embedding_vector(&self, points: &[f64]) -> Vec<f64> {
        points.iter().map(|&x| self.embedding_at(x)).collect()
    }
}

/// Closed-form MMD^2 for the given point set under the chosen weight mode.
pub fn closed_mmd_sq(t: &NormalTargetSpec, points: &[f64], mode: WeightMode) -> Result<f64> {
    let sys = linalg::build_system(&t.kernel(), points)?;
    let m = t.embedding_vector(points);
    Ok(match mode {
        WeightMode::Signed => weights::optimal_mmd_sq_signed(&sys, &m, t.self_energy()),
        WeightMode::SumToOne => weights::optimal_mmd_sq_probability(&sys, &m, t.self_energy()),
    })
}

/// Full analytic gradient of [`closed_mmd_sq`] in the support points.
pub fn closed_mmd_grad(t: &NormalTargetSpec, points: &[f64], mode: WeightMode) -> Result<Vec<f64>> {
    let sys = linalg::build_system(&t.kernel(), points)?;
    Ok(grad_with_system(t, &sys, mode))
}

fn grad_with_system(t: &NormalTargetSpec, sys: &KernelSystem, mode: WeightMode) -> Vec<f64> {
    let spec = t.kernel();
    let points = sys.points();
    let n = points.len();
    let m = t.embedding_vector(points);
    let m_grad: Vec<f64> = points.iter().map(|&x| t.embedding_grad_at(x)).collect();
    let q = linalg::solve(sys, &m); // K^{-1} m

    // row r of the kernel derivative: g[r][j] = d k(x_r, x_j) / d x_r
    let grad_row = |r: usize, v: &[f64]| -> f64 {
        (0..n)
            .map(|j| kernel::eval_grad_x(&spec, points[r], points[j]) * v[j])
            .sum()
    };

    // d/dx_r [ -m^T K^{-1} m ] = -2 q_r m'_r + 2 q_r (G q)_r
    let mut grad: Vec<f64> = (0..n)
        .map(|r| -2.0 * q[r] * m_grad[r] + 2.0 * q[r] * grad_row(r, &q))
        .collect();

    if mode == WeightMode::SumToOne {
        let ones = vec![1.0; n];
        let w = linalg::solve(sys, &ones); // K^{-1} 1
        let s: f64 = w.iter().sum();
        let excess: f64 = q.iter().sum::<f64>() - 1.0;
        for r in 0..n {
            // d(1^T K^{-1} m) and d(1^T K^{-1} 1) via d(K^{-1}) = -K^{-1} dK K^{-1}
            let d_t = w[r] * m_grad[r] - (w[r] * grad_row(r, &q) + q[r] * grad_row(r, &w));
            let d_s = -2.0 * w[r] * grad_row(r, &w);
            grad[r] += 2.0 * excess * d_t / s - excess * excess * d_s / (s * s);
        }
    }
    grad
}

/// Result of the deterministic optimizer.
#[derive(Debug, Clone)]
pub struct DeterministicResult {
    pub quantization: Quantization,
    /// MMD distance (square root of the closed-form MMD^2, clamped at 0).
    pub mmd: f64,
    pub mmd_sq: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient descent with Armijo backtracking on the closed-form MMD^2.
pub fn deterministic_optimize(
    t: &NormalTargetSpec,
    n: usize,
    mode: WeightMode,
    init: Option<Vec<f64>>,
) -> Result<DeterministicResult> {
    assert!(n >= 1);
    let mut x = match init {
        Some(v) => {
            assert_eq!(v.len(), n);
            v
        }
        None => quantile_init(t, n),
    };
    let grad_tol = 1e-8;
    let max_iters = 10_000;
    let armijo = 1e-4;
    let mut f = closed_mmd_sq(t, &x, mode)?;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let g = closed_mmd_grad(t, &x, mode)?;
        let gnorm_sq: f64 = g.iter().map(|v| v * v).sum();
        if gnorm_sq.sqrt() <= grad_tol {
            converged = true;
            break;
        }
        // backtracking line search, halving until Armijo decrease
        let mut step = 1.0;
        let mut accepted = false;
        while step >= 1e-16 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            if is_distinct(&trial) {
                if let Ok(ft) = closed_mmd_sq(t, &trial, mode) {
                    if ft <= f - armijo * step * gnorm_sq {
                        x = trial;
                        f = ft;
                        accepted = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break; // line-search failure: return best iterate, not converged
        }
    }

    let sys = linalg::build_system(&t.kernel(), &x)?;
    let m = t.embedding_vector(&x);
    let quantization = match mode {
        WeightMode::Signed => weights::signed_weights(&sys, &m),
        WeightMode::SumToOne => weights::sum_to_one_weights(&sys, &m),
    };
    Ok(DeterministicResult {
        quantization,
        mmd: f.max(0.0).sqrt(),
        mmd_sq: f,
        iterations,
        converged,
    })
}

/// n equally spaced target quantiles, levels (i - 1/2)/n.
pub fn quantile_init(t: &NormalTargetSpec, n: usize) -> Vec<f64> {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::new(t.mean, t.std).expect("validated");
    (0..n)
        .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64))
        .collect()
}

fn is_distinct(x: &[f64]) -> bool {
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            if x[i] == x[j] {
                return false;
            }
        }
    }
    true
}

impl std::str::FromStr for WeightMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "signed" => Ok(WeightMode::Signed),
            "sumtoone" | "sum-to-one" => Ok(WeightMode::SumToOne),
            other => Err(format!("unknown weight mode: {other}")),
        }
    }
}
