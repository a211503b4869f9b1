//! Propagators and parametrices.
//!
//! Euclidean regulated covariance `C(x,y) = -(1/4π) ln[Λ²((x-y)² + ε²)]`,
//! its massive counterpart `(1/2π) K₀(m|x-y|)`, and the Minkowski kernels:
//! the time-ordered Hadamard parametrix
//! `H^F(x,y) = (i/4π) ln[μ²(-uv + iε|u+v| + ε²)]` in light cone coordinates
//! `u = Δt - Δx`, `v = Δt + Δx`, its derivative kernels `H_u`, `H_v`, and the
//! two-point function of a quasi-free Hadamard state with smooth part `W`.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::special::bessel_k0;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Cutoffs and couplings of a regulated evaluation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RegulatorParams {
    /// Infrared cutoff.
    pub lambda: f64,
    /// Ultraviolet cutoff.
    pub eps: f64,
    /// Normal-ordering scale.
    pub mu: f64,
    /// Coupling `β²`; the finite regime requires `β² < 4π`.
    pub beta2: f64,
}

impl RegulatorParams {
    pub fn new(lambda: f64, eps: f64, mu: f64, beta2: f64) -> Result<Self> {
        if !(mu > 0.0) || !(lambda >= 0.0) || !(eps >= 0.0) {
            return Err(Error::domain("need mu > 0, lambda >= 0, eps >= 0"));
        }
        if !(beta2 > 0.0 && beta2 < 4.0 * PI) {
            return Err(Error::domain(format!(
                "coupling beta2 = {beta2} outside the finite regime (0, 4*pi)"
            )));
        }
        Ok(RegulatorParams {
            lambda,
            eps,
            mu,
            beta2,
        })
    }

    /// Singularity exponent `p = β²/(4π) ∈ (0,1)`.
    pub fn p(&self) -> f64 {
        self.beta2 / (4.0 * PI)
    }
}

/// Regulated Euclidean covariance `-(1/4π) ln[Λ²((x-y)² + ε²)]`.
pub fn euclid_cov(x: Vec2, y: Vec2, reg: &RegulatorParams) -> Result<f64> {
    if !(reg.lambda > 0.0) {
        return Err(Error::domain("euclid_cov needs lambda > 0"));
    }
    let r2 = (x - y).norm2() + reg.eps * reg.eps;
    if r2 <= 0.0 {
        return Err(Error::domain("euclid_cov at coincident points with eps = 0"));
    }
    Ok(-(reg.lambda * reg.lambda * r2).ln() / (4.0 * PI))
}

/// Massive covariance `(1/2π) K₀(m|x-y|)`; for small mass it approaches the
/// massless form with the identification `Λ = m e^γ / 2`.
pub fn massive_cov(x: Vec2, y: Vec2, m: f64) -> Result<f64> {
    if !(m > 0.0) {
        return Err(Error::domain("massive_cov needs m > 0"));
    }
    let r = (x - y).norm();
    if r == 0.0 {
        return Err(Error::domain("massive_cov at coincident points"));
    }
    Ok(bessel_k0(m * r)? / (2.0 * PI))
}

/// Light cone coordinates of a separation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LightConePair {
    pub u: f64,
    pub v: f64,
}

impl LightConePair {
    /// `uv`; the Minkowski interval is `-uv`.
    pub fn uv(&self) -> f64 {
        self.u * self.v
    }
}

/// `u = Δx⁰ - Δx¹`, `v = Δx⁰ + Δx¹` for the separation `x - y`.
pub fn lightcone(x: Vec2, y: Vec2) -> LightConePair {
    let d = x - y;
    LightConePair {
        u: d.0 - d.1,
        v: d.0 + d.1,
    }
}

/// `-uv + iε|u+v| + ε²`, the argument of the Feynman-parametrix logarithm.
/// Its imaginary part is nonnegative, so principal-branch powers are safe.
pub fn feynman_arg(lc: LightConePair, eps: f64) -> Complex64 {
    Complex64::new(
        -lc.u * lc.v + eps * eps,
        eps * (lc.u + lc.v).abs(),
    )
}

/// Time-ordered Hadamard parametrix
/// `H^F(x,y) = (i/4π) ln[μ²(-uv + iε|u+v| + ε²)]`.
///
/// At `ε = 0` the boundary value is used: `ln(-r + i0) = ln r + iπ` for
/// timelike separations. Symmetric in its arguments.
pub fn hadamard_feynman(x: Vec2, y: Vec2, mu: f64, eps: f64) -> Result<Complex64> {
    if !(mu > 0.0) || !(eps >= 0.0) {
        return Err(Error::domain("hadamard_feynman needs mu > 0, eps >= 0"));
    }
    let lc = lightcone(x, y);
    if eps == 0.0 && lc.uv() == 0.0 {
        return Err(Error::domain("hadamard_feynman on the light cone at eps = 0"));
    }
    let arg = feynman_arg(lc, eps) * (mu * mu);
    Ok(Complex64::new(0.0, 0.25 / PI) * arg.ln())
}

/// Derivative kernels of the Feynman parametrix:
/// `H_u = Θ(u+v)/(u-iε) + Θ(-(u+v))/(u+iε)` and the same with `u → v`.
///
/// At `ε = 0` off the light cone this is `1/u` (resp. `1/v`); exactly on
/// `u + v = 0` the average of both prescriptions is returned, which is the
/// principal value and is never hit by continuous sampling.
pub fn h_mu(x: Vec2, y: Vec2, eps: f64) -> Result<(Complex64, Complex64)> {
    if !(eps >= 0.0) {
        return Err(Error::domain("h_mu needs eps >= 0"));
    }
    let lc = lightcone(x, y);
    if eps == 0.0 && (lc.u == 0.0 || lc.v == 0.0) {
        return Err(Error::domain("h_mu on the light cone at eps = 0"));
    }
    let s = lc.u + lc.v;
    let one = Complex64::new(1.0, 0.0);
    let kernel = |w: f64| -> Complex64 {
        if s > 0.0 {
            one / Complex64::new(w, -eps)
        } else if s < 0.0 {
            one / Complex64::new(w, eps)
        } else {
            0.5 * (one / Complex64::new(w, -eps) + one / Complex64::new(w, eps))
        }
    };
    Ok((kernel(lc.u), kernel(lc.v)))
}

/// Smooth symmetric bisolution part of a quasi-free Hadamard state:
/// `W(x,y) = Σ_k w_k cos(p_k · (x-y))` over null modes `p⁰ = ±p¹`.
///
/// Null momenta make `∂²_x W = ∂²_y W = 0` exact, all weights are
/// nonnegative so difference quadratic forms are positive semidefinite,
/// and boundedness gives at most polynomial growth.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StatePartW {
    pub modes: Vec<WMode>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WMode {
    pub w: f64,
    /// `(p⁰, p¹)` with `p⁰ = ±p¹`.
    pub p: [f64; 2],
}

impl StatePartW {
    pub fn new(modes: Vec<WMode>) -> Result<Self> {
        for m in &modes {
            if !(m.w >= 0.0) {
                return Err(Error::domain("W mode weights must be nonnegative"));
            }
            if (m.p[0].abs() - m.p[1].abs()).abs() > 1e-12 * (1.0 + m.p[0].abs()) {
                return Err(Error::domain("W modes must be null: p0 = ±p1"));
            }
        }
        Ok(StatePartW { modes })
    }

    /// Vacuum sector: `W = 0`.
    pub fn vacuum() -> Self {
        StatePartW { modes: vec![] }
    }

    /// Two-mode default used throughout the tests:
    /// weights `(0.1, 0.05)`, momenta `((1,1), (2,-2))`.
    pub fn default_two_mode() -> Self {
        StatePartW {
            modes: vec![
                WMode { w: 0.1, p: [1.0, 1.0] },
                WMode {
                    w: 0.05,
                    p: [2.0, -2.0],
                },
            ],
        }
    }

    /// Phase `p · z = p⁰ z⁰ - p¹ z¹` (cosine is even, so the sign convention
    /// does not affect values).
    fn phase(m: &WMode, z: Vec2) -> f64 {
        m.p[0] * z.0 - m.p[1] * z.1
    }

    pub fn eval(&self, x: Vec2, y: Vec2) -> f64 {
        let d = x - y;
        self.modes
            .iter()
            .map(|m| m.w * Self::phase(m, d).cos())
            .sum()
    }

    /// Gradient with respect to the first argument, Cartesian components.
    pub fn grad_x(&self, x: Vec2, y: Vec2) -> Vec2 {
        let d = x - y;
        let mut g = Vec2::ZERO;
        for m in &self.modes {
            let s = -m.w * Self::phase(m, d).sin();
            g = g + Vec2(m.p[0] * s, -m.p[1] * s);
        }
        g
    }

    /// Light cone components `(∂_u W, ∂_v W)` with respect to the first
    /// argument.
    pub fn grad_x_lightcone(&self, x: Vec2, y: Vec2) -> (f64, f64) {
        let g = self.grad_x(x, y);
        (0.5 * (g.0 - g.1), 0.5 * (g.0 + g.1))
    }

    /// Coincidence limit `lim_{z'→z} ∂^z_μ ∂^{z'}_ν W(z,z')` in light cone
    /// components `(uu, uv, vv)`: evaluates `Σ_k w_k p_μ p_ν` exactly.
    pub fn coincident_second_derivative_lightcone(&self) -> (f64, f64, f64) {
        let mut uu = 0.0;
        let mut uv = 0.0;
        let mut vv = 0.0;
        for m in &self.modes {
            // Cartesian ∂^z_μ ∂^{z'}_ν cos(p·(z-z')) at z=z' is p_μ p_ν with
            // p_t = p⁰, p_x = -p¹ in the phase convention above.
            let pt = m.p[0];
            let px = -m.p[1];
            let pu = 0.5 * (pt - px);
            let pv = 0.5 * (pt + px);
            uu += m.w * pu * pu;
            uv += m.w * pu * pv;
            vv += m.w * pv * pv;
        }
        (uu, uv, vv)
    }

    /// The quadratic form `Σ_{i,j} [W(x_i,x_j) - W(y_i,x_j) - W(x_i,y_j)
    /// + W(y_i,y_j)]`, nonnegative for any configuration.
    pub fn difference_quadratic_form(&self, xs: &[Vec2], ys: &[Vec2]) -> f64 {
        let mut sum = 0.0;
        for &xi in xs {
            for &xj in xs {
                sum += self.eval(xi, xj);
            }
        }
        for &yi in ys {
            for &yj in ys {
                sum += self.eval(yi, yj);
            }
        }
        for &xi in xs {
            for &yj in ys {
                sum -= 2.0 * self.eval(xi, yj);
            }
        }
        sum
    }
}

/// Two-point function of the quasi-free state:
/// `G⁺(x,y) = (i/4π) ln[Λ²(ε+iu)(ε+iv)] - i W(x,y)`.
pub fn mink_twopoint(x: Vec2, y: Vec2, reg: &RegulatorParams, w: &StatePartW) -> Result<Complex64> {
    if !(reg.lambda > 0.0) {
        return Err(Error::domain("mink_twopoint needs lambda > 0"));
    }
    let lc = lightcone(x, y);
    if reg.eps == 0.0 && lc.uv() == 0.0 {
        return Err(Error::domain("mink_twopoint on the light cone at eps = 0"));
    }
    let fac = Complex64::new(reg.eps, lc.u) * Complex64::new(reg.eps, lc.v);
    let val = Complex64::new(0.0, 0.25 / PI) * ((reg.lambda * reg.lambda) * fac).ln()
        - Complex64::new(0.0, w.eval(x, y));
    Ok(val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::EULER_GAMMA;

    #[test]
    fn euclid_cov_closed_form_points() {
        let reg = RegulatorParams::new(1.0, 0.0, 1.0, PI).unwrap();
        let v = euclid_cov(Vec2(1.0, 0.0), Vec2::ZERO, &reg).unwrap();
        assert!(v.abs() < 1e-15);
        let reg = RegulatorParams::new(1.0, 1.0, 1.0, PI).unwrap();
        let v = euclid_cov(Vec2::ZERO, Vec2::ZERO, &reg).unwrap();
        assert!(v.abs() < 1e-15);
        let reg = RegulatorParams::new(2.0, 0.0, 1.0, PI).unwrap();
        let v = euclid_cov(Vec2(1.0, 0.0), Vec2::ZERO, &reg).unwrap();
        assert!((v + 4.0f64.ln() / (4.0 * PI)).abs() < 1e-12);
        assert!((v + 0.110_317_8).abs() < 1e-6);
    }

    #[test]
    fn euclid_cov_domain_errors() {
        let reg = RegulatorParams::new(0.0, 0.0, 1.0, PI).unwrap();
        assert!(euclid_cov(Vec2(1.0, 0.0), Vec2::ZERO, &reg).is_err());
        let reg = RegulatorParams::new(1.0, 0.0, 1.0, PI).unwrap();
        assert!(euclid_cov(Vec2::ZERO, Vec2::ZERO, &reg).is_err());
    }

    #[test]
    fn massive_cov_values() {
        let v = massive_cov(Vec2(1.0, 0.0), Vec2::ZERO, 1.0).unwrap();
        assert!((v - 0.421_024_438_240_708 / (2.0 * PI)).abs() < 1e-14);
        assert!((v - 0.067_008_120_508_497).abs() < 1e-12);
        let v = massive_cov(Vec2(1.0, 0.0), Vec2::ZERO, 10.0).unwrap();
        assert!((v - 2.829_784_8e-6).abs() < 1e-11);
    }

    #[test]
    fn massless_limit_of_massive_cov() {
        // (1/2π) K0(m r) = -(1/4π) ln[m² e^{2γ}/4 · r²] + O(m)
        let m = 1e-6;
        let r = 1.0;
        let exact = massive_cov(Vec2(r, 0.0), Vec2::ZERO, m).unwrap();
        let log_form = -(m * m * (2.0 * EULER_GAMMA).exp() / 4.0 * r * r).ln() / (4.0 * PI);
        assert!((exact - log_form).abs() < 10.0 * m);
        // Same thing phrased through euclid_cov with Λ = m e^γ / 2.
        let reg = RegulatorParams::new(m * EULER_GAMMA.exp() / 2.0, 0.0, 1.0, PI).unwrap();
        let c = euclid_cov(Vec2(r, 0.0), Vec2::ZERO, &reg).unwrap();
        assert!((exact - c).abs() < 10.0 * m);
    }

    #[test]
    fn lightcone_coordinates() {
        let lc = lightcone(Vec2(1.0, 0.0), Vec2::ZERO);
        assert_eq!((lc.u, lc.v), (1.0, 1.0));
        let lc = lightcone(Vec2(0.0, 1.0), Vec2::ZERO);
        assert_eq!((lc.u, lc.v), (-1.0, 1.0));
        let lc = lightcone(Vec2(0.3, -0.4), Vec2(0.3, -0.4));
        assert_eq!((lc.u, lc.v), (0.0, 0.0));
    }

    #[test]
    fn hadamard_feynman_boundary_values() {
        // Spacelike: -uv = 1, ln 1 = 0.
        let v = hadamard_feynman(Vec2(0.0, 1.0), Vec2::ZERO, 1.0, 0.0).unwrap();
        assert!(v.norm() < 1e-15);
        // Timelike: ln(-1 + i0) = iπ, so (i/4π)(iπ) = -1/4.
        let v = hadamard_feynman(Vec2(1.0, 0.0), Vec2::ZERO, 1.0, 0.0).unwrap();
        assert!((v.re + 0.25).abs() < 1e-15);
        assert!(v.im.abs() < 1e-15);
        // Exactly symmetric (the argument is even in the separation).
        let (x, y) = (Vec2(0.37, -1.2), Vec2(-0.11, 0.45));
        let a = hadamard_feynman(x, y, 1.3, 0.2).unwrap();
        let b = hadamard_feynman(y, x, 1.3, 0.2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn h_mu_values_and_fd_oracle() {
        // u = 2, u+v > 0, eps = 0: H_u = 0.5.
        let (hu, _hv) = h_mu(Vec2(2.0, 0.0), Vec2::ZERO, 0.0).unwrap();
        assert!((hu - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        // u = 1, v = -3 (u+v < 0): H_u = 1.0 real.
        let (hu, hv) = h_mu(Vec2(-1.0, -2.0), Vec2::ZERO, 0.0).unwrap();
        assert!((hu - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((hv - Complex64::new(-1.0 / 3.0, 0.0)).norm() < 1e-12);
        // H_mu = -4πi ∂_mu H^F: central finite differences at eps = 0.1.
        let eps = 0.1;
        let x = Vec2(0.7, 0.15);
        let y = Vec2(-0.2, -0.05);
        let (hu, hv) = h_mu(x, y, eps).unwrap();
        let h = 1e-5;
        // ∂_u = (∂_t - ∂_x)/2 acting on the first argument.
        let fd_u = (hadamard_feynman(x + Vec2(h, -h), y, 1.0, eps).unwrap()
            - hadamard_feynman(x + Vec2(-h, h), y, 1.0, eps).unwrap())
            / (2.0 * 2.0 * h);
        let fd_v = (hadamard_feynman(x + Vec2(h, h), y, 1.0, eps).unwrap()
            - hadamard_feynman(x + Vec2(-h, -h), y, 1.0, eps).unwrap())
            / (2.0 * 2.0 * h);
        let mi4pi = Complex64::new(0.0, -4.0 * PI);
        assert!(((mi4pi * fd_u - hu) / hu.norm()).norm() < 1e-6);
        assert!(((mi4pi * fd_v - hv) / hv.norm()).norm() < 1e-6);
    }

    #[test]
    fn twopoint_antisymmetric_part() {
        let w = StatePartW::default_two_mode();
        let reg = RegulatorParams::new(1.0, 1.0, 1.0, PI).unwrap();
        // W = 0, Λ = 1, ε = 1, x = y → 0.
        let v = mink_twopoint(Vec2::ZERO, Vec2::ZERO, &reg, &StatePartW::vacuum()).unwrap();
        assert!(v.norm() < 1e-15);
        // Spacelike: antisymmetric part → 0 as eps → 0.
        let reg = RegulatorParams::new(1.0, 1e-8, 1.0, PI).unwrap();
        let x = Vec2(0.0, 1.0);
        let d = mink_twopoint(x, Vec2::ZERO, &reg, &w).unwrap()
            - mink_twopoint(Vec2::ZERO, x, &reg, &w).unwrap();
        assert!(d.norm() < 1e-7);
        // Timelike, Δt = 1: commutator Δ(x,0) = -1/2.
        let x = Vec2(1.0, 0.0);
        let d = mink_twopoint(x, Vec2::ZERO, &reg, &w).unwrap()
            - mink_twopoint(Vec2::ZERO, x, &reg, &w).unwrap();
        assert!((d - Complex64::new(-0.5, 0.0)).norm() < 1e-7);
    }

    #[test]
    fn w_invariants() {
        let w = StatePartW::default_two_mode();
        // Symmetric.
        let (x, y) = (Vec2(0.3, 1.4), Vec2(-0.6, 0.2));
        assert_eq!(w.eval(x, y), w.eval(y, x));
        // Exact bisolution: ∂² cos(p·z) = ((p⁰)² - (p¹)²) cos = 0 for null p;
        // check via the wave operator on finite differences.
        let h = 1e-4;
        let box_w = (-(w.eval(x + Vec2(h, 0.0), y) - 2.0 * w.eval(x, y)
            + w.eval(x - Vec2(h, 0.0), y))
            + (w.eval(x + Vec2(0.0, h), y) - 2.0 * w.eval(x, y) + w.eval(x - Vec2(0.0, h), y)))
            / (h * h);
        assert!(box_w.abs() < 1e-6);
        // Difference quadratic form is nonnegative on random configurations.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) * 8.0 - 4.0
        };
        for n in 1..=6 {
            for _ in 0..20 {
                let xs: Vec<Vec2> = (0..n).map(|_| Vec2(next(), next())).collect();
                let ys: Vec<Vec2> = (0..n).map(|_| Vec2(next(), next())).collect();
                assert!(w.difference_quadratic_form(&xs, &ys) >= -1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_w_modes() {
        assert!(StatePartW::new(vec![WMode { w: -0.1, p: [1.0, 1.0] }]).is_err());
        assert!(StatePartW::new(vec![WMode { w: 0.1, p: [1.0, 0.5] }]).is_err());
    }
}
