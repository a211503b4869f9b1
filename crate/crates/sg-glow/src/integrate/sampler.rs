//! Importance samplers.
//!
//! The pair sampler draws `(x, y)` exactly from the density
//! `g(x) g(y) |x-y|^{-2p} / Z` by rejection: `x` uniform on the cutoff
//! support, the pair distance from the integrable radial law `r^{1-2p}`, the
//! angle uniform, and acceptance `g(x) g(y) / g0²`. The power-law factor
//! cancels exactly between target and proposal, so acceptance is bounded and
//! the singularity is handled without clipping. The normalisation `Z` is a
//! one-time cubature, cached with its error bound.
//!
//! The Minkowski variant links the pair through light cone separations,
//! `g(x) g(y) |Δu|^{-p} |Δv|^{-p} / Z'`, which keeps weights bounded near
//! the cones where the time-ordered kernels are singular.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::integrate::cubature::polar_cubature;
use crate::integrate::quad::adaptive_1d;
use crate::integrate::rng::CounterRng;
use crate::smearing::{PlateauCutoff, Smearing};
use std::f64::consts::PI;

/// A proposal distribution with exactly known density.
pub trait Sampler: Sync {
    fn dim(&self) -> usize;
    /// Fill `out` (length `dim`) and return the weight `1/density`.
    fn sample_into(&self, rng: &mut CounterRng, out: &mut [f64]) -> f64;
}

/// Isotropic Gaussian proposal, iid `N(center_i, sigma²)` per coordinate.
pub struct GaussianSampler {
    pub center: Vec<f64>,
    pub sigma: f64,
}

impl Sampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn sample_into(&self, rng: &mut CounterRng, out: &mut [f64]) -> f64 {
        let d = self.center.len();
        let mut log_density = -0.5 * d as f64 * (2.0 * PI * self.sigma * self.sigma).ln();
        for i in 0..d {
            let z = rng.normal();
            out[i] = self.center[i] + self.sigma * z;
            log_density += -0.5 * z * z;
        }
        (-log_density).exp()
    }
}

/// Uniform proposal on a disc.
pub struct DiscSampler {
    pub center: Vec2,
    pub radius: f64,
}

impl Sampler for DiscSampler {
    fn dim(&self) -> usize {
        2
    }

    fn sample_into(&self, rng: &mut CounterRng, out: &mut [f64]) -> f64 {
        let r = self.radius * rng.uniform().sqrt();
        let th = 2.0 * PI * rng.uniform();
        out[0] = self.center.0 + r * th.cos();
        out[1] = self.center.1 + r * th.sin();
        PI * self.radius * self.radius
    }
}

/// Autocorrelation `h(s) = ∫ g(x) g(x + s e₁) d²x` and the weighted radial
/// integrals `∫ s^{1-2p} h(s) ds` shared by both pair samplers.
fn radial_autocorrelation_integral(g: &PlateauCutoff, p: f64, rel_tol: f64) -> Result<f64> {
    let ro = g.outer_radius();
    let c = g.center_vec();
    let h = |s: f64| -> f64 {
        polar_cubature(
            &mut |x: Vec2| g.value(x) * g.value(x + Vec2(s, 0.0)),
            c,
            ro,
            &[],
            0.1 * rel_tol,
            1e-14,
        )
        .map(|(v, _)| v)
        .unwrap_or(0.0)
    };
    let (val, _) = adaptive_1d(
        &mut |s: f64| s.powf(1.0 - 2.0 * p) * h(s),
        0.0,
        2.0 * ro,
        &[],
        rel_tol,
        1e-14,
        300,
    )?;
    Ok(val)
}

/// `∬ g(x) g(y) |x-y|^{-2p} d²x d²y` by the autocorrelation reduction
/// (one 2-D cubature per radial node, one adaptive radial integral).
pub fn pair_kernel_integral(g: &PlateauCutoff, p: f64) -> Result<f64> {
    if g.g0 == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * PI * radial_autocorrelation_integral(g, p, 1e-9)?)
}

/// `∫_0^{2π} |cos 2θ|^{-p} dθ`, the angular factor of the light cone pair
/// normalisation.
fn angular_cone_factor(p: f64) -> Result<f64> {
    let (v, _) = adaptive_1d(
        &mut |t: f64| (2.0 * t).cos().abs().powf(-p),
        0.0,
        2.0 * PI,
        &[PI / 4.0, 3.0 * PI / 4.0, 5.0 * PI / 4.0, 7.0 * PI / 4.0],
        1e-9,
        0.0,
        4000,
    )?;
    Ok(v)
}

/// Euclidean pair sampler: density `g(x) g(y) |x-y|^{-2p} / Z`.
pub struct PairSampler {
    pub g: PlateauCutoff,
    /// Singularity exponent `p = β²/(4π) ∈ (0, 1)`.
    pub p: f64,
    /// Cached normalisation `Z = ∬ g(x) g(y) |x-y|^{-2p} d²x d²y`.
    pub z: f64,
    /// Relative error bound of the cached `Z`.
    pub z_err: f64,
    r_max: f64,
}

impl PairSampler {
    pub fn new(g: PlateauCutoff, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain("pair exponent must satisfy 0 < p < 1"));
        }
        if !(g.g0 > 0.0) {
            return Err(Error::domain("pair sampler needs a nonzero cutoff"));
        }
        let tol = 1e-9;
        let radial = radial_autocorrelation_integral(&g, p, tol)?;
        let z = 2.0 * PI * radial;
        let r_max = 2.0 * g.outer_radius();
        Ok(PairSampler {
            g,
            p,
            z,
            z_err: tol,
            r_max,
        })
    }

    /// Density of one pair (relative to `d²x d²y`).
    pub fn density(&self, x: Vec2, y: Vec2) -> f64 {
        let r = (x - y).norm();
        if r == 0.0 {
            return f64::INFINITY;
        }
        self.g.value(x) * self.g.value(y) * r.powf(-2.0 * self.p) / self.z
    }

    /// Draw one pair exactly from the pair density.
    pub fn sample_pair(&self, rng: &mut CounterRng) -> (Vec2, Vec2) {
        let ro = self.g.outer_radius();
        let c = self.g.center_vec();
        let inv_g0_sq = 1.0 / (self.g.g0 * self.g.g0);
        for _ in 0..100_000 {
            let rx = ro * rng.uniform().sqrt();
            let tx = 2.0 * PI * rng.uniform();
            let x = c + Vec2(rx * tx.cos(), rx * tx.sin());
            // Inverse CDF of the radial law ∝ r^{1-2p} on (0, r_max].
            let r = self.r_max * rng.uniform_open().powf(1.0 / (2.0 - 2.0 * self.p));
            let phi = 2.0 * PI * rng.uniform();
            let y = x + Vec2(r * phi.cos(), r * phi.sin());
            if rng.uniform() < self.g.value(x) * self.g.value(y) * inv_g0_sq {
                return (x, y);
            }
        }
        panic!("pair sampler rejection loop exhausted; cutoff too thin for rejection sampling");
    }

    /// Draw `m` pairs and return them with the importance weight `1/q_sym`,
    /// where `q_sym` symmetrises the product density over all pairings of the
    /// `y` points. The integrands are symmetric under `y` permutations, so
    /// the symmetrised density is the correct one and keeps weights bounded
    /// near every `x_i = y_j` coincidence.
    pub fn sample_pairs(&self, m: usize, rng: &mut CounterRng) -> (Vec<Vec2>, Vec<Vec2>, f64) {
        let mut xs = Vec::with_capacity(m);
        let mut ys = Vec::with_capacity(m);
        for _ in 0..m {
            let (x, y) = self.sample_pair(rng);
            xs.push(x);
            ys.push(y);
        }
        let q = symmetrized_density(&xs, &ys, |x, y| self.density(x, y));
        (xs, ys, 1.0 / q)
    }
}

/// Minkowski pair sampler: density `g(x) g(y) |Δu|^{-p} |Δv|^{-p} / Z`.
pub struct MinkPairSampler {
    pub g: PlateauCutoff,
    pub p: f64,
    pub z: f64,
    l_max: f64,
}

impl MinkPairSampler {
    pub fn new(g: PlateauCutoff, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain("pair exponent must satisfy 0 < p < 1"));
        }
        if !(g.g0 > 0.0) {
            return Err(Error::domain("pair sampler needs a nonzero cutoff"));
        }
        let radial = radial_autocorrelation_integral(&g, p, 1e-9)?;
        let z = angular_cone_factor(p)? * radial;
        let l_max = 2.0 * std::f64::consts::SQRT_2 * g.outer_radius();
        Ok(MinkPairSampler { g, p, z, l_max })
    }

    pub fn density(&self, x: Vec2, y: Vec2) -> f64 {
        let du = (x.0 - y.0) - (x.1 - y.1);
        let dv = (x.0 - y.0) + (x.1 - y.1);
        if du == 0.0 || dv == 0.0 {
            return f64::INFINITY;
        }
        self.g.value(x) * self.g.value(y) * du.abs().powf(-self.p) * dv.abs().powf(-self.p)
            / self.z
    }

    pub fn sample_pair(&self, rng: &mut CounterRng) -> (Vec2, Vec2) {
        let ro = self.g.outer_radius();
        let c = self.g.center_vec();
        let inv_g0_sq = 1.0 / (self.g.g0 * self.g.g0);
        let q = 1.0 / (1.0 - self.p);
        for _ in 0..100_000 {
            let rx = ro * rng.uniform().sqrt();
            let tx = 2.0 * PI * rng.uniform();
            let x = c + Vec2(rx * tx.cos(), rx * tx.sin());
            let du = self.l_max
                * rng.uniform_open().powf(q)
                * if rng.uniform() < 0.5 { 1.0 } else { -1.0 };
            let dv = self.l_max
                * rng.uniform_open().powf(q)
                * if rng.uniform() < 0.5 { 1.0 } else { -1.0 };
            let y = x - Vec2(0.5 * (du + dv), 0.5 * (dv - du));
            if rng.uniform() < self.g.value(x) * self.g.value(y) * inv_g0_sq {
                return (x, y);
            }
        }
        panic!("pair sampler rejection loop exhausted; cutoff too thin for rejection sampling");
    }

    pub fn sample_pairs(&self, m: usize, rng: &mut CounterRng) -> (Vec<Vec2>, Vec<Vec2>, f64) {
        let mut xs = Vec::with_capacity(m);
        let mut ys = Vec::with_capacity(m);
        for _ in 0..m {
            let (x, y) = self.sample_pair(rng);
            xs.push(x);
            ys.push(y);
        }
        let q = symmetrized_density(&xs, &ys, |x, y| self.density(x, y));
        (xs, ys, 1.0 / q)
    }
}

/// `(1/m!) Σ_π Π_j q(x_j, y_{π(j)})`: the permanent of the pair-density
/// matrix over all pairings, divided by `m!`. Orders here stay ≤ 6.
fn symmetrized_density(xs: &[Vec2], ys: &[Vec2], q: impl Fn(Vec2, Vec2) -> f64) -> f64 {
    let m = xs.len();
    if m == 0 {
        return 1.0;
    }
    let mut mat = vec![0.0f64; m * m];
    for i in 0..m {
        for j in 0..m {
            mat[i * m + j] = q(xs[i], ys[j]);
        }
    }
    let mut fact = 1.0;
    for k in 2..=m {
        fact *= k as f64;
    }
    permanent(&mat, m) / fact
}

/// Permanent by Heap-style permutation enumeration; fine for `m ≤ 6`.
fn permanent(mat: &[f64], m: usize) -> f64 {
    let mut perm: Vec<usize> = (0..m).collect();
    let mut total = 0.0;
    loop {
        let mut prod = 1.0;
        for (i, &j) in perm.iter().enumerate() {
            prod *= mat[i * m + j];
        }
        total += prod;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    total
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
