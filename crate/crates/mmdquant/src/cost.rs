//! Product-space cost functions whose expectation under P x P equals the
//! optimal-weight MMD^2, together with their analytic gradients in the
//! support points.
//!
//! Three variants: the symmetric cost `c` (two kernel-system solves per
//! evaluation), the cheaper asymmetric `c_prime` (one solve, same
//! expectation), and the penalized-weights `c_double_prime` that takes an
//! explicit weight vector and involves no solve at all.

use crate::distributions::CostSample;
use crate::error::Result;
use crate::kernel::{self, KernelSpec};
use crate::linalg::{self, KernelSystem};
use crate::weights::project_simplex;

/// Prefactorized state for repeated cost evaluations at fixed points.
pub struct CostContext {
    spec: KernelSpec,
    sys: KernelSystem,
    /// K^{-1} 1
    kinv_ones: Vec<f64>,
    /// 1^T K^{-1} 1
    ones_kinv_ones: f64,
}

impl CostContext {
    pub fn new(spec: &KernelSpec, points: &[f64]) -> Result<Self> {
        let sys = linalg::build_system(spec, points)?;
        let ones = vec![1.0; sys.n()];
        let kinv_ones = linalg::solve(&sys, &ones);
        let ones_kinv_ones = kinv_ones.iter().sum();
        Ok(Self {
            spec: *spec,
            sys,
            kinv_ones,
            ones_kinv_ones,
        })
    }

    pub fn points(&self) -> &[f64] {
        self.sys.points()
    }

    pub fn system(&self) -> &KernelSystem {
        &self.sys
    }

    fn kernel_vector(&self, xi: f64) -> Vec<f64> {
        self.points()
            .iter()
            .map(|&x| kernel::eval(&self.spec, xi, x))
            .collect()
    }

    /// Symmetric cost c(x, xi, xi').
    pub fn cost_c(&self, s: &CostSample) -> f64 {
        let a = self.kernel_vector(s.xi);
        let b = self.kernel_vector(s.xi_prime);
        let v = linalg::solve(&self.sys, &b);
        let bilinear: f64 = a.iter().zip(&v).map(|(x, y)| x * y).sum();
        let alpha = 1.0 - dot(&self.kinv_ones, &a);
        let beta = 1.0 - dot(&self.kinv_ones, &b);
        kernel::eval(&self.spec, s.xi, s.xi_prime) - bilinear
            + alpha * beta / self.ones_kinv_ones
    }

    /// Asymmetric cost c'(x, xi, xi'); one solve, equal in expectation to c.
    pub fn cost_c_prime(&self, s: &CostSample) -> f64 {
        let a = self.kernel_vector(s.xi);
        let b = self.kernel_vector(s.xi_prime);
        let u = linalg::solve(&self.sys, &a);
        let bilinear: f64 = b.iter().zip(&u).map(|(x, y)| x * y).sum();
        let alpha = 1.0 - dot(&self.kinv_ones, &a);
        kernel::eval(&self.spec, s.xi, s.xi_prime) - bilinear
            + alpha * alpha / self.ones_kinv_ones
    }

    /// Explicit-weights cost c''(x, mu, xi, xi'); no solve involved.
    pub fn cost_c_double_prime(&self, mu: &[f64], s: &CostSample) -> f64 {
        assert_eq!(mu.len(), self.points().len());
        let a = self.kernel_vector(s.xi);
        let b = self.kernel_vector(s.xi_prime);
        let kmu = self.sys.mat_vec(mu);
        kernel::eval(&self.spec, s.xi, s.xi_prime) - dot(mu, &a) - dot(mu, &b) + dot(mu, &kmu)
    }

    /// Penalized objective: c'' at the projected weights plus the Euclidean
    /// distance of mu from its simplex projection.
    pub fn penalized_objective(&self, mu: &[f64], s: &CostSample) -> f64 {
        let p = project_simplex(mu);
        let penalty: f64 = mu
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        self.cost_c_double_prime(&p, s) + penalty
    }

    /// Full analytic gradient of c with respect to the support points,
    /// including the dependence of K(x)^{-1} and 1^T K^{-1} 1 on x.
    pub fn grad_points_c(&self, s: &CostSample) -> Vec<f64> {
        self.grad_points(s, true)
    }

    /// Analytic gradient of the asymmetric cost c'.
    pub fn grad_points_c_prime(&self, s: &CostSample) -> Vec<f64> {
        self.grad_points(s, false)
    }

    fn grad_points(&self, s: &CostSample, symmetric: bool) -> Vec<f64> {
        let n = self.points().len();
        let points = self.points();
        let a = self.kernel_vector(s.xi);
        let b = self.kernel_vector(s.xi_prime);
        let u = linalg::solve(&self.sys, &a);
        let v = linalg::solve(&self.sys, &b);
        let w = &self.kinv_ones;
        let ssc = self.ones_kinv_ones;
        let alpha = 1.0 - dot(w, &a);
        let beta = 1.0 - dot(w, &b);

        // (G z)_r = sum_j dk(x_r, x_j)/dx_r * z_j for each needed z
        let grad_row = |r: usize, z: &[f64]| -> f64 {
            (0..n)
                .map(|j| kernel::eval_grad_x(&self.spec, points[r], points[j]) * z[j])
                .sum()
        };

        (0..n)
            .map(|r| {
                // derivatives of the kernel vectors in x_r (only entry r moves)
                let da = kernel::eval_grad_x(&self.spec, points[r], s.xi);
                let db = kernel::eval_grad_x(&self.spec, points[r], s.xi_prime);
                let gu = grad_row(r, &u);
                let gv = grad_row(r, &v);
                let gw = grad_row(r, w);

                // d(-a^T K^{-1} b): the same bilinear term in c and c'
                let d_bilinear = -v[r] * da - u[r] * db + u[r] * gv + v[r] * gu;

                // d alpha = -(d w)^T a - w^T (d a), with dw = -K^{-1} dK w
                let d_alpha = w[r] * gu + u[r] * gw - w[r] * da;
                let d_s = -2.0 * w[r] * gw;

                let d_penalty = if symmetric {
                    let d_beta = w[r] * gv + v[r] * gw - w[r] * db;
                    (d_alpha * beta + alpha * d_beta) / ssc - alpha * beta * d_s / (ssc * ssc)
                } else {
                    2.0 * alpha * d_alpha / ssc - alpha * alpha * d_s / (ssc * ssc)
                };
                d_bilinear + d_penalty
            })
            .collect()
    }

    /// Gradient of c'' in the support points for a fixed weight vector.
    pub fn grad_points_c_double_prime(&self, mu: &[f64], s: &CostSample) -> Vec<f64> {
        let n = self.points().len();
        let points = self.points();
        let grad_row = |r: usize, z: &[f64]| -> f64 {
            (0..n)
                .map(|j| kernel::eval_grad_x(&self.spec, points[r], points[j]) * z[j])
                .sum()
        };
        (0..n)
            .map(|r| {
                let da = kernel::eval_grad_x(&self.spec, points[r], s.xi);
                let db = kernel::eval_grad_x(&self.spec, points[r], s.xi_prime);
                -mu[r] * da - mu[r] * db + 2.0 * mu[r] * grad_row(r, mu)
            })
            .collect()
    }

    /// Gradient of c'' in the weight vector: -k(xi,x) - k(xi',x) + 2 K mu.
    pub fn grad_mu_c_double_prime(&self, mu: &[f64], s: &CostSample) -> Vec<f64> {
        let a = self.kernel_vector(s.xi);
        let b = self.kernel_vector(s.xi_prime);
        let kmu = self.sys.mat_vec(mu);
        (0..mu.len()).map(|i| -a[i] - b[i] + 2.0 * kmu[i]).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
