//! Numerical engine for the massless two-dimensional Sine-Gordon model in the
//! finite regime `β² < 4π`.
//!
//! The crate evaluates renormalised Gell-Mann-Low expectation values of the
//! composite operator `∂_μφ ∂_νφ` and of the stress tensor, in Euclidean
//! signature and in Minkowski space-time (for a family of quasi-free Hadamard
//! states), and verifies the identities these quantities satisfy: Cauchy
//! determinant evaluation, neutrality/super-selection exponents, logarithmic
//! renormalisation splits, series majorants and stress-tensor conservation.
//!
//! Layout:
//! - [`special`]: modified Bessel function `K₀` (self-contained kernel).
//! - [`smearing`]: Gaussian-mixture test functions and plateau cutoffs with
//!   exact jets (value, gradient, Hessian).
//! - [`covariance`]: Euclidean/massive covariances, light cone coordinates,
//!   Hadamard parametrix, its derivative kernels and the state part `W`.
//! - [`renorm`]: regulated, renormalised and divergent parts of the singular
//!   products, plus the local counterterm constants.
//! - [`correlators`]: closed-form free-theory correlators with vertex
//!   insertions, both signatures.
//! - [`integrate`]: seeded counter-based Monte Carlo with importance sampling
//!   for the pairwise power-law singularities, and deterministic adaptive
//!   cubature for smeared integrals.
//! - [`glow`]: order-by-order assembly of the perturbative series, bound
//!   constants and majorants.
//! - [`verify`]: executable identity checks (determinant bound, Young
//!   exponents, exponent fits, conservation residuals).
//! - [`cli`]: configuration, result cache and the `sg-glow` command surface.

pub mod cli;
pub mod correlators;
pub mod covariance;
pub mod error;
pub mod geom;
pub mod glow;
pub mod integrate;
pub mod renorm;
pub mod smearing;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
pub use geom::{Tensor2, Vec2};
