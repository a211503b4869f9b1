//! Numerical engine: deterministic adaptive cubature for low-dimensional
//! smeared integrals and seeded Monte Carlo with importance sampling tuned to
//! the pairwise power-law singularities.

pub mod cubature;
pub mod mc;
pub mod quad;
pub mod rng;
pub mod sampler;

pub use cubature::{adaptive_cubature, iterated_uv, polar_cubature};
pub use mc::{mc_integrate, mc_integrate_complex, McConfig, McEstimate};
pub use quad::{adaptive_1d, QuadValue};
pub use rng::{CounterRng, RNG_ALGORITHM_ID};
pub use sampler::{GaussianSampler, PairSampler, Sampler};
