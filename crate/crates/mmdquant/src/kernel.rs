//! Kernel functions for the Gaussian and Matérn families, normalized so
//! that `y -> k(x, y)` integrates to one, together with first derivatives.
//!
//! The Gaussian kernel is the normal density with standard deviation `ell`.
//! The Matérn kernel of smoothness `nu` is evaluated through the modified
//! Bessel function `K_nu`, with closed exponential-polynomial forms for
//! `nu` in {1/2, 3/2, 5/2} and the analytic limit at distance zero.
//! `nu = infinity` dispatches to the Gaussian of the same bandwidth.

use crate::bessel::ln_bessel_k;
use crate::error::{Error, Result};
use crate::numeric::adaptive_simpson;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

const SQRT_PI: f64 = 1.772_453_850_905_516;
const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    Gaussian,
    Matern,
}

/// Kernel family with bandwidth `ell` and, for Matérn, smoothness `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth_ell: f64,
    /// Smoothness; ignored for the Gaussian family. `f64::INFINITY` aliases
    /// the Gaussian kernel of the same bandwidth.
    pub smoothness_nu: f64,
}

impl KernelSpec {
    pub fn gaussian(ell: f64) -> Result<Self> {
        if !(ell.is_finite() && ell > 0.0) {
            return Err(Error::InvalidParameter(format!("bandwidth ell = {ell}")));
        }
        Ok(Self {
            family: KernelFamily::Gaussian,
            bandwidth_ell: ell,
            smoothness_nu: f64::INFINITY,
        })
    }

    pub fn matern(ell: f64, nu: f64) -> Result<Self> {
        if !(ell.is_finite() && ell > 0.0) {
            return Err(Error::InvalidParameter(format!("bandwidth ell = {ell}")));
        }
        if !(nu > 0.0) {
            return Err(Error::InvalidParameter(format!("smoothness nu = {nu}")));
        }
        Ok(Self {
            family: KernelFamily::Matern,
            bandwidth_ell: ell,
            smoothness_nu: nu,
        })
    }

    /// True for the Gaussian family, including Matern with infinite nu.
    pub fn is_gaussian(&self) -> bool {
        self.family == KernelFamily::Gaussian || self.smoothness_nu.is_infinite()
    }

    /// Peak value k(x, x).
    pub fn peak(&self) -> f64 {
        eval(self, 0.0, 0.0)
    }
}

/// k(x, y); symmetric and strictly positive for finite arguments.
pub fn eval(spec: &KernelSpec, x: f64, y: f64) -> f64 {
    debug_assert!(x.is_finite() && y.is_finite(), "non-finite kernel input");
    let d = (y - x).abs();
    let ell = spec.bandwidth_ell;
    if spec.is_gaussian() {
        gaussian_value(ell, d)
    } else {
        matern_value(ell, spec.smoothness_nu, d)
    }
}

/// Checked variant of [`eval`] for untrusted inputs.
pub fn eval_checked(spec: &KernelSpec, x: f64, y: f64) -> Result<f64> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite("kernel argument"));
    }
    Ok(eval(spec, x, y))
}

/// d k(x, y) / dx; antisymmetric under swapping x and y.
///
/// For Matérn with nu <= 1/2 the derivative has a kink at x = y; this
/// returns the symmetric subgradient 0 there, matching the Gaussian peak.
pub fn eval_grad_x(spec: &KernelSpec, x: f64, y: f64) -> f64 {
    let ell = spec.bandwidth_ell;
    if spec.is_gaussian() {
        return -((x - y) / (ell * ell)) * gaussian_value(ell, (y - x).abs());
    }
    let nu = spec.smoothness_nu;
    let d = (y - x).abs();
    if d == 0.0 {
        return 0.0; // true derivative for nu > 1/2, subgradient convention otherwise
    }
    let sign = (x - y).signum();
    -sign * matern_radial_slope(ell, nu, d)
}

/// Numerical quadrature of y -> k(0, y) over [-T, T], T = 40 ell.
/// The constant in both families is chosen so this is 1; test support.
pub fn unit_integral_check(spec: &KernelSpec) -> f64 {
    let t = 40.0 * spec.bandwidth_ell;
    let f = |y: f64| eval(spec, 0.0, y);
    // split at the origin: the Matérn family is not smooth there
    adaptive_simpson(&f, -t, 0.0, 1e-13) + adaptive_simpson(&f, 0.0, t, 1e-13)
}

fn gaussian_value(ell: f64, d: f64) -> f64 {
    let z = d / ell;
    (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * ell)
}

fn matern_value(ell: f64, nu: f64, d: f64) -> f64 {
    if d == 0.0 {
        // limit of t^nu K_nu(t): sqrt(2 nu) Gamma(nu) / (2 ell sqrt(pi) Gamma(nu + 1/2))
        return (0.5 * (2.0 * nu).ln() + ln_gamma(nu)
            - LN_2
            - ell.ln()
            - SQRT_PI.ln()
            - ln_gamma(nu + 0.5))
        .exp();
    }
    if nu == 0.5 {
        return (-d / ell).exp() / (2.0 * ell);
    }
    if nu == 1.5 {
        let t = 3f64.sqrt() * d / ell;
        return 3f64.sqrt() * (1.0 + t) * (-t).exp() / (4.0 * ell);
    }
    if nu == 2.5 {
        let t = 5f64.sqrt() * d / ell;
        return 5f64.sqrt() * (t * t + 3.0 * t + 3.0) * (-t).exp() / (16.0 * ell);
    }
    let t = (2.0 * nu).sqrt() * d / ell;
    (ln_prefactor(ell, nu) + nu * t.ln() + ln_bessel_k(nu, t)).exp()
}

// ln of 2^{-nu} sqrt(2 nu) / (ell sqrt(pi) Gamma(nu + 1/2))
fn ln_prefactor(ell: f64, nu: f64) -> f64 {
    -nu * LN_2 + 0.5 * (2.0 * nu).ln() - ell.ln() - SQRT_PI.ln() - ln_gamma(nu + 0.5)
}

/// -dC/dd for the Matérn kernel at distance d > 0 (positive for d > 0).
fn matern_radial_slope(ell: f64, nu: f64, d: f64) -> f64 {
    if nu == 0.5 {
        return (-d / ell).exp() / (2.0 * ell * ell);
    }
    if nu == 1.5 {
        let t = 3f64.sqrt() * d / ell;
        return 3.0 * t * (-t).exp() / (4.0 * ell * ell);
    }
    if nu == 2.5 {
        let t = 5f64.sqrt() * d / ell;
        return 5.0 * (t * t + t) * (-t).exp() / (16.0 * ell * ell);
    }
    // d/dt [t^nu K_nu(t)] = -t^nu K_{nu-1}(t), with K_{-m} = K_m
    let a = (2.0 * nu).sqrt() / ell;
    let t = a * d;
    (ln_prefactor(ell, nu) + a.ln() + nu * t.ln() + ln_bessel_k((nu - 1.0).abs(), t)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(ell: f64) -> KernelSpec {
        KernelSpec::gaussian(ell).unwrap()
    }

    fn matern(ell: f64, nu: f64) -> KernelSpec {
        KernelSpec::matern(ell, nu).unwrap()
    }

    #[test]
    fn gaussian_peak_value() {
        // 1/sqrt(2 pi * 0.01)
        let spec = gauss(0.1);
        assert!((eval(&spec, 0.3, 0.3) - 3.989_422_804_014_327).abs() < 1e-12);
    }

    #[test]
    fn matern_half_is_laplace_density() {
        let spec = matern(1.0, 0.5);
        let expect = (-2.0f64).exp() / 2.0;
        assert!((eval(&spec, 0.0, 2.0) - expect).abs() < 1e-15);
        // pointwise over a grid against the closed form
        let spec = matern(0.1, 0.5);
        for i in 0..100 {
            let d = i as f64 * 0.01;
            let expect = (-d / 0.1).exp() / 0.2;
            assert!((eval(&spec, 0.0, d) - expect).abs() <= 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn matern_general_path_matches_closed_forms() {
        // force the Bessel path by perturbing nu off the special cases
        for &(nu, ell) in &[(0.5, 0.7), (1.5, 0.4), (2.5, 0.5)] {
            let exact = matern(ell, nu);
            for i in 1..=12 {
                let d = i as f64 * 0.1 * ell;
                let t = (2.0 * nu).sqrt() * d / ell;
                let via_bessel =
                    (ln_prefactor(ell, nu) + nu * t.ln() + ln_bessel_k(nu, t)).exp();
                let e = eval(&exact, 0.0, d);
                assert!(
                    ((via_bessel - e) / e).abs() < 1e-12,
                    "nu={nu} d={d}: {via_bessel} vs {e}"
                );
            }
        }
    }

    #[test]
    fn matern_value_at_zero_is_analytic_limit() {
        for &nu in &[0.5, 0.9, 1.5, 2.5, 3.7] {
            let spec = matern(0.6, nu);
            let at_zero = eval(&spec, 1.0, 1.0);
            // compare against the limit formula evaluated directly
            let expect = ((2.0 * nu).sqrt() * statrs::function::gamma::gamma(nu))
                / (2.0 * 0.6 * SQRT_PI * statrs::function::gamma::gamma(nu + 0.5));
            assert!(
                ((at_zero - expect) / expect).abs() < 1e-12,
                "nu={nu}: {at_zero} vs {expect}"
            );
            // continuity: tiny d approaches the limit
            let near = eval(&spec, 1.0, 1.0 + 1e-9);
            assert!(((near - at_zero) / at_zero).abs() < 1e-4);
        }
    }

    #[test]
    fn symmetry_and_positivity() {
        for spec in [gauss(0.3), matern(0.5, 0.5), matern(0.2, 2.5), matern(1.0, 1.1)] {
            for i in -5..=5 {
                for j in -5..=5 {
                    let (x, y) = (i as f64 * 0.37, j as f64 * 0.61);
                    let kxy = eval(&spec, x, y);
                    assert!(kxy > 0.0);
                    assert_eq!(kxy, eval(&spec, y, x));
                }
            }
        }
    }

    #[test]
    fn monotone_decay_in_distance() {
        for spec in [gauss(0.4), matern(0.4, 0.5), matern(0.4, 2.5), matern(0.4, 4.3)] {
            let mut prev = eval(&spec, 0.0, 0.0);
            for i in 1..200 {
                let v = eval(&spec, 0.0, i as f64 * 0.02);
                assert!(v <= prev + 1e-15, "increase at step {i}");
                prev = v;
            }
        }
    }

    #[test]
    fn gaussian_gradient_identity() {
        let spec = gauss(1.0);
        assert_eq!(eval_grad_x(&spec, 0.7, 0.7), 0.0);
        let g = eval_grad_x(&spec, 1.0, 0.0);
        let expect = -(-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((g - expect).abs() < 1e-12);
        assert!((g - -0.241_970_724_519_143_37).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-6;
        for spec in [gauss(0.5), matern(0.5, 2.5), matern(0.3, 1.5), matern(0.8, 3.3), matern(0.5, 0.9)] {
            for &(x, y) in &[(0.4, 0.1), (-0.2, 0.9), (1.3, 1.25), (0.0, -2.0)] {
                let g = eval_grad_x(&spec, x, y);
                let fd = (eval(&spec, x + h, y) - eval(&spec, x - h, y)) / (2.0 * h);
                let scale = fd.abs().max(spec.peak() * 1e-6);
                assert!(
                    ((g - fd) / scale).abs() < 1e-6,
                    "spec={spec:?} x={x} y={y}: {g} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn gradient_antisymmetric_in_swap() {
        for spec in [gauss(0.5), matern(0.4, 2.5)] {
            let g1 = eval_grad_x(&spec, 0.8, 0.2);
            let g2 = eval_grad_x(&spec, 0.2, 0.8);
            assert!((g1 + g2).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_limit_of_matern() {
        let ell = 0.5;
        let g = gauss(ell);
        let m = matern(ell, 200.0);
        let peak = eval(&g, 0.0, 0.0);
        for i in 0..=30 {
            let d = i as f64 * 0.1 * ell; // grid over [0, 3 ell]
            let diff = (eval(&m, 0.0, d) - eval(&g, 0.0, d)).abs();
            assert!(diff <= 1e-2 * peak, "d={d}: diff {diff:.3e}");
        }
    }

    #[test]
    fn infinite_nu_aliases_gaussian() {
        let m = matern(0.5, f64::INFINITY);
        let g = gauss(0.5);
        for i in 0..20 {
            let d = i as f64 * 0.1;
            assert_eq!(eval(&m, 0.0, d), eval(&g, 0.0, d));
        }
    }

    #[test]
    fn unit_integrals() {
        assert!((unit_integral_check(&gauss(0.5)) - 1.0).abs() < 1e-10);
        assert!((unit_integral_check(&matern(0.1, 0.5)) - 1.0).abs() < 1e-8);
        assert!((unit_integral_check(&matern(0.5, 2.5)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::matern(0.5, 0.0).is_err());
        assert!(KernelSpec::matern(0.5, -2.0).is_err());
        assert!(KernelSpec::matern(f64::NAN, 1.0).is_err());
        assert!(KernelSpec::matern(0.5, f64::INFINITY).is_ok());
        assert!(eval_checked(&KernelSpec::gaussian(0.5).unwrap(), f64::NAN, 0.0).is_err());
    }
}
