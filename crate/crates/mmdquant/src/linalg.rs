//! Dense Cholesky factorization of kernel matrices and the plain and
//! bordered (KKT) solves the weight formulas reduce to.
//!
//! Kernel matrices with clustered points become numerically singular; the
//! factorization escalates a diagonal jitter geometrically from zero up to
//! a hard ceiling of 1e-6 times the largest diagonal entry, and fails with
//! a typed error beyond that instead of returning silently inaccurate
//! solves.

use crate::error::{Error, Result};
use crate::kernel::{self, KernelSpec};

const JITTER_FLOOR: f64 = 1e-12;
const JITTER_CEILING: f64 = 1e-6;

/// Factorized n x n kernel system K(x) + jitter I = L L^T.
#[derive(Debug, Clone)]
pub struct KernelSystem {
    points: Vec<f64>,
    /// dense K (without jitter), row-major
    matrix: Vec<f64>,
    /// lower Cholesky factor of K + jitter I, row-major
    factor: Vec<f64>,
    jitter_used: f64,
    log_det: f64,
}

impl KernelSystem {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// log det(K + jitter I)
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Entry K_ij of the unjittered kernel matrix.
    pub fn matrix_entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n() + j]
    }

    /// K v (unjittered matrix-vector product).
    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(v.len(), n);
        (0..n)
            .map(|i| (0..n).map(|j| self.matrix[i * n + j] * v[j]).sum())
            .collect()
    }
}

/// Build and factorize the kernel system for pairwise-distinct points.
pub fn build_system(spec: &KernelSpec, points: &[f64]) -> Result<KernelSystem> {
    let n = points.len();
    assert!(n >= 1, "kernel system needs at least one point");
    for i in 0..n {
        if !points[i].is_finite() {
            return Err(Error::NonFinite("support point"));
        }
        for j in (i + 1)..n {
            if points[i] == points[j] {
                return Err(Error::DegeneratePoints(i, j));
            }
        }
    }
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel::eval(spec, points[i], points[j]);
            matrix[i * n + j] = v;
            matrix[j * n + i] = v;
        }
    }
    factorize(points.to_vec(), matrix)
}

/// Factorize a given symmetric positive-definite matrix with jitter escalation.
pub(crate) fn factorize(points: Vec<f64>, matrix: Vec<f64>) -> Result<KernelSystem> {
    let n = points.len();
    let max_diag = (0..n).fold(0.0f64, |acc, i| acc.max(matrix[i * n + i]));
    let ceiling = JITTER_CEILING * max_diag;
    let mut jitter = 0.0;
    loop {
        if let Some(factor) = try_cholesky(&matrix, n, jitter) {
            let log_det = 2.0 * (0..n).map(|i| factor[i * n + i].ln()).sum::<f64>();
            return Ok(KernelSystem {
                points,
                matrix,
                factor,
                jitter_used: jitter,
                log_det,
            });
        }
        jitter = if jitter == 0.0 {
            JITTER_FLOOR * max_diag
        } else {
            jitter * 10.0
        };
        if jitter > ceiling {
            return Err(Error::IllConditioned { ceiling });
        }
    }
}

fn try_cholesky(matrix: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = matrix[i * n + j];
            if i == j {
                sum += jitter;
            }
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve (K + jitter I) w = rhs through the Cholesky factor.
pub fn solve(sys: &KernelSystem, rhs: &[f64]) -> Vec<f64> {
    let n = sys.n();
    assert_eq!(rhs.len(), n, "rhs length mismatch");
    let l = &sys.factor;
    let mut y = rhs.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}

/// Solve the bordered KKT system
/// `[[K, 1], [1^T, 0]] [p; lambda/2] = [m; 1]`
/// by the Schur complement on the border row: two K-solves and the scalar
/// `1^T K^{-1} 1`.
pub fn solve_bordered(sys: &KernelSystem, m: &[f64]) -> (Vec<f64>, f64) {
    let n = sys.n();
    assert_eq!(m.len(), n, "m length mismatch");
    let a = solve(sys, m); // K^{-1} m
    let ones = vec![1.0; n];
    let b = solve(sys, &ones); // K^{-1} 1
    let s: f64 = b.iter().sum(); // 1^T K^{-1} 1
    let lambda_half = (a.iter().sum::<f64>() - 1.0) / s;
    let p: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(ai, bi)| ai - lambda_half * bi)
        .collect();
    (p, lambda_half)
}
