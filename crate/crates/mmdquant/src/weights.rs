//! Optimal quantization weights for fixed support points: the unconstrained
//! signed solution K^{-1} m, the sum-to-one solution from the bordered KKT
//! system, the fully simplex-constrained solution by a primal active-set
//! iteration, and the Euclidean projection onto the probability simplex.

use crate::error::{Error, Result};
use crate::linalg::{self, KernelSystem};
use serde::{Deserialize, Serialize};

/// Tolerance distinguishing round-off from genuine constraint activity.
const NEG_TOL: f64 = 1e-12;
const DUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    /// Unconstrained; weights may be negative and need not sum to one.
    Signed,
    /// Weights sum to one but may be negative.
    SumToOne,
    /// Weights sum to one and are non-negative.
    Simplex,
}

/// Support points with their weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Quantization {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: WeightKind,
}

impl Quantization {
    /// Check the kind's invariants; used on construction and on file reload.
    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.weights.len() {
            return Err(Error::InvalidParameter(
                "points/weights length mismatch".into(),
            ));
        }
        let sum: f64 = self.weights.iter().sum();
        match self.kind {
            WeightKind::Signed => {}
            WeightKind::SumToOne => {
                if (sum - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidParameter(format!(
                        "sum-to-one weights sum to {sum}"
                    )));
                }
            }
            WeightKind::Simplex => {
                if (sum - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidParameter(format!(
                        "simplex weights sum to {sum}"
                    )));
                }
                if self.weights.iter().any(|&w| w < -NEG_TOL) {
                    return Err(Error::InvalidParameter("negative simplex weight".into()));
                }
            }
        }
        Ok(())
    }
}

/// Simplex-constrained solution with the active set and its multipliers.
#[derive(Debug, Clone)]
pub struct ActiveSetSolution {
    pub quantization: Quantization,
    /// Indices whose non-negativity constraint binds (weight fixed to 0).
    pub active_set: Vec<usize>,
    /// Dual multipliers over the active set, non-negative at the optimum.
    pub multipliers_mu: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
}

/// Unconstrained optimal weights K^{-1} m.
pub fn signed_weights(sys: &KernelSystem, m: &[f64]) -> Quantization {
    Quantization {
        points: sys.points().to_vec(),
        weights: linalg::solve(sys, m),
        kind: WeightKind::Signed,
    }
}

/// Sum-to-one optimal weights from the bordered KKT system.
pub fn sum_to_one_weights(sys: &KernelSystem, m: &[f64]) -> Quantization {
    let (p, _) = linalg::solve_bordered(sys, m);
    Quantization {
        points: sys.points().to_vec(),
        weights: p,
        kind: WeightKind::SumToOne,
    }
}

/// Simplex-constrained weights by primal active-set iteration.
///
/// Starting from an empty active set, the sum-to-one system is solved on
/// the free indices; indices with negative weights are clamped to zero,
/// and a clamped index whose multiplier turns negative is released again.
pub fn simplex_weights(sys: &KernelSystem, m: &[f64]) -> Result<ActiveSetSolution> {
    let n = sys.n();
    assert_eq!(m.len(), n);
    let cap = n * 10;
    let mut free: Vec<bool> = vec![true; n];
    let mut iterations = 0usize;
    loop {
        iterations += 1;
        if iterations > cap {
            return Err(Error::ActiveSetCycle { cap });
        }
        let free_idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let (p_free, lambda_half) = solve_on_subset(sys, m, &free_idx)?;

        // clamp every free index that went negative
        let mut clamped_any = false;
        for (slot, &i) in free_idx.iter().enumerate() {
            if p_free[slot] < -NEG_TOL && free_idx.len() > 1 {
                free[i] = false;
                clamped_any = true;
            }
        }
        if clamped_any {
            continue;
        }

        // assemble the full weight vector
        let mut p = vec![0.0; n];
        for (slot, &i) in free_idx.iter().enumerate() {
            p[i] = p_free[slot].max(0.0);
        }

        // dual feasibility on the clamped set: mu_j = (K p)_j + lambda/2 - m_j
        let kp = sys.mat_vec(&p);
        let mut worst: Option<(usize, f64)> = None;
        let mut mus: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if !free[j] {
                let mu = kp[j] + lambda_half - m[j];
                mus.push((j, mu));
                if mu < -DUAL_TOL && worst.map_or(true, |(_, w)| mu < w) {
                    worst = Some((j, mu));
                }
            }
        }
        if let Some((j, _)) = worst {
            free[j] = true; // release the most violated index
            continue;
        }

        let active_set: Vec<usize> = mus.iter().map(|&(j, _)| j).collect();
        let multipliers_mu: Vec<f64> = mus.iter().map(|&(_, mu)| mu).collect();
        let quantization = Quantization {
            points: sys.points().to_vec(),
            weights: p,
            kind: WeightKind::Simplex,
        };
        quantization.validate()?;
        return Ok(ActiveSetSolution {
            quantization,
            active_set,
            multipliers_mu,
            lambda: 2.0 * lambda_half,
            iterations,
        });
    }
}

/// Solve the sum-to-one system restricted to the given index subset.
fn solve_on_subset(
    sys: &KernelSystem,
    m: &[f64],
    idx: &[usize],
) -> Result<(Vec<f64>, f64)> {
    let k = idx.len();
    let sub_points: Vec<f64> = idx.iter().map(|&i| sys.points()[i]).collect();
    let mut sub_matrix = vec![0.0; k * k];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            sub_matrix[a * k + b] = sys.matrix_entry(i, j);
        }
    }
    let sub_sys = linalg::factorize(sub_points, sub_matrix)?;
    let sub_m: Vec<f64> = idx.iter().map(|&i| m[i]).collect();
    Ok(linalg::solve_bordered(&sub_sys, &sub_m))
}

/// Euclidean projection onto the probability simplex by sort-and-threshold.
pub fn project_simplex(mu: &[f64]) -> Vec<f64> {
    let n = mu.len();
    assert!(n >= 1);
    let mut sorted = mu.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    let mut k = 0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            tau = t;
            k = i + 1;
        }
    }
    debug_assert!(k >= 1);
    mu.iter().map(|&v| (v - tau).max(0.0)).collect()
}

/// Unconstrained optimal MMD^2: self_energy - m^T K^{-1} m.
pub fn optimal_mmd_sq_signed(sys: &KernelSystem, m: &[f64], self_energy: f64) -> f64 {
    let w = linalg::solve(sys, m);
    self_energy - m.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
}

/// Sum-to-one optimal MMD^2: the signed optimum plus the constraint penalty
/// (1^T K^{-1} m - 1)^2 / (1^T K^{-1} 1).
pub fn optimal_mmd_sq_probability(sys: &KernelSystem, m: &[f64], self_energy: f64) -> f64 {
    optimal_mmd_sq_signed(sys, m, self_energy) + probability_penalty(sys, m)
}

/// The penalty term separating the sum-to-one optimum from the signed one.
pub fn probability_penalty(sys: &KernelSystem, m: &[f64]) -> f64 {
    let a = linalg::solve(sys, m);
    let ones = vec![1.0; sys.n()];
    let b = linalg::solve(sys, &ones);
    let s: f64 = b.iter().sum();
    let t: f64 = a.iter().sum();
    (t - 1.0) * (t - 1.0) / s
}

/// MMD^2 of an explicitly supplied weight vector:
/// self_energy - 2 p^T m + p^T K p.
pub fn mmd_sq_of_weights(sys: &KernelSystem, m: &[f64], p: &[f64], self_energy: f64) -> f64 {
    let kp = sys.mat_vec(p);
    let quad: f64 = p.iter().zip(&kp).map(|(a, b)| a * b).sum();
    let lin: f64 = p.iter().zip(m).map(|(a, b)| a * b).sum();
    self_energy - 2.0 * lin + quad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::NormalTargetSpec;
    use crate::kernel::{self, KernelSpec};
    use crate::linalg::build_system;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(ell: f64) -> KernelSpec {
        KernelSpec::gaussian(ell).unwrap()
    }

    #[test]
    fn signed_single_point() {
        let spec = gauss(0.5);
        let sys = build_system(&spec, &[0.4]).unwrap();
        let m = [0.23];
        let q = signed_weights(&sys, &m);
        assert!((q.weights[0] - m[0] / sys.matrix_entry(0, 0)).abs() < 1e-14);
    }

    #[test]
    fn dirac_target_is_exactly_representable() {
        // target delta_xi with single support point at xi: m_1 = k(xi, xi)
        let spec = gauss(0.3);
        let xi = 0.7;
        let sys = build_system(&spec, &[xi]).unwrap();
        let m = [kernel::eval(&spec, xi, xi)];
        let q = signed_weights(&sys, &m);
        assert!((q.weights[0] - 1.0).abs() < 1e-12);
        let self_energy = kernel::eval(&spec, xi, xi);
        let mmd = optimal_mmd_sq_signed(&sys, &m, self_energy);
        assert!(mmd.abs() < 1e-10);
    }

    #[test]
    fn signed_weights_are_a_local_minimum() {
        // no random perturbation lowers the unconstrained objective
        let target = NormalTargetSpec::new(0.0, 1.0, 0.5).unwrap();
        let spec = gauss(0.5);
        let pts = [-1.0, 0.0, 1.0];
        let sys = build_system(&spec, &pts).unwrap();
        let m: Vec<f64> = pts.iter().map(|&x| target.embedding_at(x)).collect();
        let self_energy = target.self_energy();
        let q = signed_weights(&sys, &m);
        let best = mmd_sq_of_weights(&sys, &m, &q.weights, self_energy);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let delta: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.0577..0.0577)).collect();
            let perturbed: Vec<f64> =
                q.weights.iter().zip(&delta).map(|(w, d)| w + d).collect();
            let v = mmd_sq_of_weights(&sys, &m, &perturbed, self_energy);
            assert!(v >= best - 1e-12);
        }
    }

    #[test]
    fn sum_to_one_single_point() {
        let spec = gauss(0.5);
        let sys = build_system(&spec, &[0.4]).unwrap();
        let q = sum_to_one_weights(&sys, &[0.2]);
        assert!((q.weights[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn symmetric_instance_gives_palindromic_weights() {
        let target = NormalTargetSpec::new(0.0, 1.0, 0.5).unwrap();
        let spec = gauss(0.5);
        let pts = [-1.2, -0.4, 0.4, 1.2];
        let sys = build_system(&spec, &pts).unwrap();
        let m: Vec<f64> = pts.iter().map(|&x| target.embedding_at(x)).collect();
        let q = sum_to_one_weights(&sys, &m);
        assert!((q.weights[0] - q.weights[3]).abs() < 1e-10);
        assert!((q.weights[1] - q.weights[2]).abs() < 1e-10);
    }

    #[test]
    fn simplex_identical_to_sum_to_one_when_interior() {
        let target = NormalTargetSpec::new(0.0, 1.0, 0.3).unwrap();
        let spec = gauss(0.3);
        let pts = [-1.5, -0.5, 0.5, 1.5];
        let sys = build_system(&spec, &pts).unwrap();
        let m: Vec<f64> = pts.iter().map(|&x| target.embedding_at(x)).collect();
        let s2o = sum_to_one_weights(&sys, &m);
        assert!(s2o.weights.iter().all(|&w| w > 0.0), "instance not interior");
        let simplex = simplex_weights(&sys, &m).unwrap();
        assert!(simplex.active_set.is_empty());
        for i in 0..4 {
            assert!((simplex.quantization.weights[i] - s2o.weights[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn n2_forced_vertex() {
        // engineer m so that the sum-to-one weights are (1.3, -0.3)
        let spec = gauss(0.5);
        let pts = [0.0, 0.4];
        let sys = build_system(&spec, &pts).unwrap();
        let target_p = [1.3, -0.3];
        let kp = sys.mat_vec(&target_p);
        // choose lambda = 0: m = K p works since sum(p) = 1
        let sol = simplex_weights(&sys, &kp).unwrap();
        let w = &sol.quantization.weights;
        assert!((w[0] - 1.0).abs() < 1e-10 && w[1].abs() < 1e-12, "{w:?}");
        assert_eq!(sol.active_set, vec![1]);
        assert!(sol.multipliers_mu[0] >= 0.0);
        // sanity: the unconstrained path indeed produced the negative weight
        let s2o = sum_to_one_weights(&sys, &kp);
        assert!((s2o.weights[1] + 0.3).abs() < 1e-9);
    }

    // exhaustive enumeration over all 2^n - 1 support subsets, keeping the
    // best feasible KKT point
    fn enumerate_simplex_optimum(sys: &KernelSystem, m: &[f64], self_energy: f64) -> f64 {
        let n = sys.n();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            if let Ok((p_sub, _)) = super::solve_on_subset(sys, m, &idx) {
                if p_sub.iter().any(|&w| w < -1e-10) {
                    continue;
                }
                let mut p = vec![0.0; n];
                for (slot, &i) in idx.iter().enumerate() {
                    p[i] = p_sub[slot].max(0.0);
                }
                let v = mmd_sq_of_weights(sys, m, &p, self_energy);
                best = best.min(v);
            }
        }
        best
    }

    #[test]
    fn active_set_matches_exhaustive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 25 {
            let n = rng.gen_range(2..=8);
            let ell = if rng.gen_bool(0.5) { 0.5 } else { 0.1 };
            let spec = if rng.gen_bool(0.5) {
                gauss(ell)
            } else {
                KernelSpec::matern(ell, 0.5).unwrap()
            };
            let mut pts: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            pts.sort_by(f64::total_cmp);
            if pts.windows(2).any(|w| w[1] - w[0] < 1e-3) {
                continue;
            }
            let sys = build_system(&spec, &pts).unwrap();
            let m: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s2o = sum_to_one_weights(&sys, &m);
            if s2o.weights.iter().all(|&w| w >= 0.0) {
                continue; // want instances with genuine constraint activity
            }
            checked += 1;
            let sol = simplex_weights(&sys, &m).unwrap();
            let got = mmd_sq_of_weights(&sys, &m, &sol.quantization.weights, 0.0);
            let best = enumerate_simplex_optimum(&sys, &m, 0.0);
            assert!(
                (got - best).abs() <= 1e-9,
                "n={n}: active set {got} vs enumeration {best}"
            );
        }
    }

    #[test]
    fn simplex_objective_dominates_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(2..=7);
            let spec = gauss(rng.gen_range(0.2..0.8));
            let mut pts: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            pts.sort_by(f64::total_cmp);
            if pts.windows(2).any(|w| w[1] - w[0] < 1e-2) {
                continue;
            }
            let sys = build_system(&spec, &pts).unwrap();
            let m: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s2o = sum_to_one_weights(&sys, &m);
            let simplex = simplex_weights(&sys, &m).unwrap();
            let v_s2o = mmd_sq_of_weights(&sys, &m, &s2o.weights, 0.0);
            let v_simp = mmd_sq_of_weights(&sys, &m, &simplex.quantization.weights, 0.0);
            assert!(v_simp >= v_s2o - 1e-10);
            if simplex.active_set.is_empty() {
                assert!((v_simp - v_s2o).abs() < 1e-10);
            } else {
                assert!(s2o.weights.iter().any(|&w| w < 0.0));
            }
        }
    }

    #[test]
    fn projection_trivial_cases() {
        let p = project_simplex(&[0.5, 0.7]);
        assert!((p[0] - 0.4).abs() < 1e-15 && (p[1] - 0.6).abs() < 1e-15);
        let p = project_simplex(&[2.0, -1.0]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
    }

    // brute-force KKT oracle: try every support subset
    fn project_simplex_oracle(mu: &[f64]) -> Vec<f64> {
        let n = mu.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let s: f64 = idx.iter().map(|&i| mu[i]).sum();
            let tau = (s - 1.0) / idx.len() as f64;
            let mut p = vec![0.0; n];
            let mut feasible = true;
            for &i in &idx {
                p[i] = mu[i] - tau;
                if p[i] < 0.0 {
                    feasible = false;
                }
            }
            // optimality: clamped coordinates must satisfy mu_i <= tau
            for i in 0..n {
                if mask >> i & 1 == 0 && mu[i] > tau {
                    feasible = false;
                }
            }
            if feasible {
                let d: f64 = p.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                    best = Some((d, p));
                }
            }
        }
        best.unwrap().1
    }

    #[test]
    fn projection_matches_subset_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let mu: Vec<f64> = (0..7).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let got = project_simplex(&mu);
            let expect = project_simplex_oracle(&mu);
            for i in 0..7 {
                assert!((got[i] - expect[i]).abs() <= 1e-12, "{mu:?}");
            }
            // idempotence
            let twice = project_simplex(&got);
            assert_eq!(got, twice);
        }
    }

    #[test]
    fn projection_is_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let a: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let pa = project_simplex(&a);
            let pb = project_simplex(&b);
            let dp: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum();
            let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            assert!(dp <= d + 1e-12);
        }
    }

    #[test]
    fn penalty_identity_and_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.gen_range(2..=8);
            let spec = gauss(rng.gen_range(0.2..0.9));
            let mut pts: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            pts.sort_by(f64::total_cmp);
            if pts.windows(2).any(|w| w[1] - w[0] < 1e-2) {
                continue;
            }
            let sys = build_system(&spec, &pts).unwrap();
            let m: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.8)).collect();
            let self_energy = 1.0;
            let signed = optimal_mmd_sq_signed(&sys, &m, self_energy);
            let prob = optimal_mmd_sq_probability(&sys, &m, self_energy);
            let penalty = probability_penalty(&sys, &m);
            assert!((prob - signed - penalty).abs() < 1e-12);
            assert!(prob >= signed - 1e-12);
            // any explicit simplex weight vector does no better
            let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
            let explicit = mmd_sq_of_weights(&sys, &m, &p, self_energy);
            assert!(explicit >= prob - 1e-10);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let spec = gauss(0.5);
        let pts = [-1.3, -0.2, 0.6, 1.8];
        let m = [0.2, 0.45, 0.4, 0.15];
        let sys = build_system(&spec, &pts).unwrap();
        let q = sum_to_one_weights(&sys, &m);
        let perm = [2usize, 0, 3, 1];
        let pts_p: Vec<f64> = perm.iter().map(|&i| pts[i]).collect();
        let m_p: Vec<f64> = perm.iter().map(|&i| m[i]).collect();
        let sys_p = build_system(&spec, &pts_p).unwrap();
        let q_p = sum_to_one_weights(&sys_p, &m_p);
        for (slot, &i) in perm.iter().enumerate() {
            assert!((q_p.weights[slot] - q.weights[i]).abs() < 1e-12);
        }
    }
}
