//! Quantization of probability measures by weighted support points that
//! minimize maximum mean discrepancy in a reproducing-kernel Hilbert space.
//!
//! The crate provides:
//!
//! - Gaussian and Matern kernel evaluation with unit-integral
//!   normalization ([`kernel`], [`bessel`]);
//! - Cholesky-based kernel linear systems with bordered (sum-to-one) and
//!   active-set (simplex) weight solvers ([`linalg`], [`weights`]);
//! - unbiased stochastic costs over independent target pairs and their
//!   analytic point gradients ([`cost`], [`montecarlo`]);
//! - stochastic gradient descent over support points, including a
//!   penalized joint variant with explicit simplex weights ([`sgd`]);
//! - closed-form objectives and deterministic gradient descent for normal
//!   targets under the Gaussian kernel ([`closedform`]);
//! - target distributions with inverse-CDF sampling and analytic kernel
//!   embeddings where available ([`distributions`]);
//! - the experiment layer backing the command-line interface
//!   ([`experiment`]).

pub mod bessel;
pub mod closedform;
pub mod cost;
pub mod distributions;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod linalg;
pub mod montecarlo;
mod numeric;
pub mod sgd;
pub mod weights;

pub use error::{Error, Result};
pub use kernel::{KernelFamily, KernelSpec};
pub use weights::{Quantization, WeightKind};
