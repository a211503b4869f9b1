//! Closed-form free-theory correlators with vertex insertions.
//!
//! These are the integrands of every series term. Vertex correlators are
//! explicit products of pair factors; correlators of the composite operator
//! `∂_μφ ∂_νφ` combine the renormalised kernels of [`crate::renorm`] with
//! those products. Non-neutral configurations vanish in the physical limit
//! (the super-selection rule of the vacuum sector), which is applied
//! analytically rather than by taking the infrared cutoff to zero
//! numerically.

use crate::covariance::{feynman_arg, lightcone, RegulatorParams, StatePartW};
use crate::error::{Error, Result};
use crate::geom::{Tensor2, Vec2};
use crate::integrate::cubature::{adaptive_cubature, iterated_uv};
use crate::renorm::{counterterm_c, cross_term_smeared, raw_h_kernels, u_ren_shifted};
use crate::smearing::{Smearing, SmearingFunction};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Positions and unit charges of the vertex-operator insertions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChargeConfiguration {
    pub points: Vec<Vec2>,
    pub charges: Vec<i8>,
}

impl ChargeConfiguration {
    pub fn new(points: Vec<Vec2>, charges: Vec<i8>) -> Result<Self> {
        if points.len() != charges.len() {
            return Err(Error::domain("points and charges must have equal length"));
        }
        if charges.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::domain("charges must be ±1"));
        }
        Ok(ChargeConfiguration { points, charges })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_charge(&self) -> i32 {
        self.charges.iter().map(|&s| s as i32).sum()
    }

    pub fn is_neutral(&self) -> bool {
        self.total_charge() == 0
    }

    fn has_coincident_points(&self) -> bool {
        for j in 0..self.len() {
            for k in (j + 1)..self.len() {
                if (self.points[j] - self.points[k]).norm2() == 0.0 {
                    return true;
                }
            }
        }
        false
    }
}

/// Scalar correlator value together with its charge sector.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CorrelatorValue<T> {
    pub value: T,
    pub neutrality_class: i32,
}

/// Euclidean vertex correlator `⟨∏_j V_{σ_j β}(x_j)⟩`.
///
/// Physical limit: `δ_{0,Σσ} ∏_{j<k} [μ²(x_j-x_k)²]^{σ_jσ_k β²/4π}`.
/// Regulated: `(Λ/μ)^{(β²/4π)(Σσ)²} ∏_{j<k} [μ²((x_j-x_k)²+ε²)]^{σ_jσ_k β²/4π}`.
pub fn euclid_vertex_corr(
    cfg: &ChargeConfiguration,
    reg: &RegulatorParams,
    physical_limit: bool,
) -> Result<CorrelatorValue<f64>> {
    let q = cfg.total_charge();
    if reg.eps == 0.0 && cfg.has_coincident_points() {
        return Err(Error::domain("coincident insertion points at eps = 0"));
    }
    if physical_limit && q != 0 {
        return Ok(CorrelatorValue {
            value: 0.0,
            neutrality_class: q,
        });
    }
    let p = reg.p();
    let eps2 = if physical_limit { 0.0 } else { reg.eps * reg.eps };
    let mut log_sum = 0.0;
    for j in 0..cfg.len() {
        for k in (j + 1)..cfg.len() {
            let r2 = (cfg.points[j] - cfg.points[k]).norm2() + eps2;
            let sign = (cfg.charges[j] * cfg.charges[k]) as f64;
            log_sum += sign * p * (reg.mu * reg.mu * r2).ln();
        }
    }
    if !physical_limit {
        if !(reg.lambda > 0.0) {
            return Err(Error::domain(
                "regulated correlator needs lambda > 0 (or use the physical limit)",
            ));
        }
        log_sum += p * (q * q) as f64 * (reg.lambda / reg.mu).ln();
    }
    Ok(CorrelatorValue {
        value: log_sum.exp(),
        neutrality_class: q,
    })
}

/// Physical-limit pair product as a log, `Σ_{j<k} σ_jσ_k p ln[μ²(x_j-x_k)²]`.
fn euclid_pair_log(cfg: &ChargeConfiguration, p: f64, mu: f64) -> f64 {
    let mut log_sum = 0.0;
    for j in 0..cfg.len() {
        for k in (j + 1)..cfg.len() {
            let r2 = (cfg.points[j] - cfg.points[k]).norm2();
            log_sum += (cfg.charges[j] * cfg.charges[k]) as f64 * p * (mu * mu * r2).ln();
        }
    }
    log_sum
}

/// Renormalised smeared correlator of the composite operator,
/// `⟨ O_μν(f) ∏_j V_{σ_j β}(x_j) ⟩`, in the physical limit.
///
/// For a neutral configuration this is
/// `-(β²/4π²) ∏_{j<k}[μ²(x_j-x_k)²]^{σσ β²/4π} × [ Σ_k u^ren(x_k - ·)(f) +
///   2 Σ_{j<k} σ_jσ_k ∫ f(z) (x_j-z)_(μ (x_k-z)_ν) / ((x_j-z)²(x_k-z)²) d²z ]`;
/// non-neutral configurations give the zero tensor.
pub fn euclid_o_corr_smeared(
    f: &SmearingFunction,
    cfg: &ChargeConfiguration,
    beta2: f64,
    mu: f64,
    rel_tol: f64,
) -> Result<Tensor2<f64>> {
    if !cfg.is_neutral() || cfg.is_empty() {
        return Ok(Tensor2::zero());
    }
    if cfg.has_coincident_points() {
        return Err(Error::domain("coincident insertion points"));
    }
    let p = beta2 / (4.0 * PI);
    let prefactor = -beta2 / (4.0 * PI * PI) * euclid_pair_log(cfg, p, mu).exp();
    let mut bracket = Tensor2::zero();
    for &x in &cfg.points {
        bracket = bracket.add_t(u_ren_shifted(x, f, mu, rel_tol)?);
    }
    for j in 0..cfg.len() {
        for k in (j + 1)..cfg.len() {
            let sign = (cfg.charges[j] * cfg.charges[k]) as f64;
            let cross = cross_term_smeared(f, cfg.points[j], cfg.points[k], rel_tol)?;
            bracket = bracket.add_t(cross.scale(2.0 * sign));
        }
    }
    Ok(bracket.scale(prefactor))
}

/// Which vertex factor of the stress tensor contributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexCharge {
    Plus,
    Minus,
}

/// Smeared vertex correlator `∫ f(z) ⟨ V_{±β}(z) ∏_j V_{σ_j β}(x_j) ⟩ d²z`
/// in the physical limit; nonzero only when `±1 + Σσ = 0`.
pub fn euclid_vertex_corr_smeared(
    f: &SmearingFunction,
    cfg: &ChargeConfiguration,
    charge: VertexCharge,
    beta2: f64,
    mu: f64,
    rel_tol: f64,
) -> Result<f64> {
    let s0: i32 = match charge {
        VertexCharge::Plus => 1,
        VertexCharge::Minus => -1,
    };
    if cfg.total_charge() + s0 != 0 {
        return Ok(0.0);
    }
    let p = beta2 / (4.0 * PI);
    let pair_part = euclid_pair_log(cfg, p, mu).exp();
    // Singular centers: insertions attracting the new charge (σ_j s0 = -1).
    let centers: Vec<Vec2> = cfg
        .points
        .iter()
        .zip(&cfg.charges)
        .filter(|(_, &s)| (s as i32) * s0 == -1)
        .map(|(&x, _)| x)
        .collect();
    let c_f = f.centroid();
    let mut outer = f.support_radius(1e-16);
    for &x in &cfg.points {
        outer = outer.max((x - c_f).norm() + f.support_radius(1e-16));
    }
    let mut integrand = |z: Vec2| -> f64 {
        let mut log_sum = 0.0;
        for (j, &x) in cfg.points.iter().enumerate() {
            let r2 = (z - x).norm2();
            if r2 == 0.0 {
                return 0.0;
            }
            log_sum += (cfg.charges[j] as i32 * s0) as f64 * p * (mu * mu * r2).ln();
        }
        f.value(z) * log_sum.exp()
    };
    let val = adaptive_cubature(&mut integrand, &centers, rel_tol, outer)?;
    Ok(val * pair_part)
}

/// Smeared stress-tensor correlator `⟨ T_μν(f) ∏_j V_{σ_j β}(x_j) ⟩` in the
/// physical limit, optionally with the quantum-corrected vertex coupling
/// `g (1 - β²/8π)`.
///
/// The traceless combination of the composite part needs no counterterm;
/// charge sectors `Σσ = ∓1` receive only the `V_{±β}` term and `|Σσ| ≥ 2`
/// vanishes.
pub fn euclid_t_corr_smeared(
    f: &SmearingFunction,
    cfg: &ChargeConfiguration,
    beta2: f64,
    mu: f64,
    g_at_insertion: f64,
    quantum_corrected: bool,
    rel_tol: f64,
) -> Result<Tensor2<f64>> {
    let q = cfg.total_charge();
    let coupling = if quantum_corrected {
        g_at_insertion * (1.0 - beta2 / (8.0 * PI))
    } else {
        g_at_insertion
    };
    match q {
        0 => {
            let o = euclid_o_corr_smeared(f, cfg, beta2, mu, rel_tol)?;
            Ok(o.traceless_euclid())
        }
        -1 => {
            let v = euclid_vertex_corr_smeared(f, cfg, VertexCharge::Plus, beta2, mu, rel_tol)?;
            Ok(Tensor2::diag(coupling * v))
        }
        1 => {
            let v = euclid_vertex_corr_smeared(f, cfg, VertexCharge::Minus, beta2, mu, rel_tol)?;
            Ok(Tensor2::diag(coupling * v))
        }
        _ => Ok(Tensor2::zero()),
    }
}

/// `ln` of one time-ordered pair factor `μ²(-uv + iε|u+v| + ε²)`, principal
/// branch. At `ε = 0` the boundary value applies: spacelike pairs are real,
/// timelike pairs acquire the phase `iπ` (from `ln(-r + i0) = ln r + iπ`).
pub fn ln_mink_pair_factor(a: Vec2, b: Vec2, mu: f64, eps: f64) -> Result<Complex64> {
    let lc = lightcone(a, b);
    if eps > 0.0 {
        Ok((feynman_arg(lc, eps) * (mu * mu)).ln())
    } else {
        let uv = lc.uv();
        if uv == 0.0 {
            return Err(Error::domain("light cone pair at eps = 0"));
        }
        if uv < 0.0 {
            Ok(Complex64::new((mu * mu * (-uv)).ln(), 0.0))
        } else {
            Ok(Complex64::new((mu * mu * uv).ln(), PI))
        }
    }
}

/// Minkowski time-ordered vertex correlator `ω(T[⊗_j V_{σ_j β}(x_j)])`.
///
/// Physical limit: `δ_{0,Σσ} ∏_{j<k}[-μ²(u_{jk}v_{jk})_-]^{σσ β²/4π}
/// exp[-(β²/2) ΣΣ σ_iσ_j W(x_i,x_j)]`; the regulated form keeps the `Λ` and
/// `ε` factors. Phases come from the principal logarithm of each pair
/// factor, never from separately exponentiated moduli.
pub fn mink_vertex_corr(
    cfg: &ChargeConfiguration,
    reg: &RegulatorParams,
    w: &StatePartW,
    physical_limit: bool,
) -> Result<CorrelatorValue<Complex64>> {
    let q = cfg.total_charge();
    if physical_limit && q != 0 {
        return Ok(CorrelatorValue {
            value: Complex64::new(0.0, 0.0),
            neutrality_class: q,
        });
    }
    if reg.eps == 0.0 {
        for j in 0..cfg.len() {
            for k in (j + 1)..cfg.len() {
                if lightcone(cfg.points[j], cfg.points[k]).uv() == 0.0 {
                    return Err(Error::domain("insertion pair on the light cone at eps = 0"));
                }
            }
        }
    }
    let p = reg.p();
    let mut log_sum = Complex64::new(0.0, 0.0);
    for j in 0..cfg.len() {
        for k in (j + 1)..cfg.len() {
            let sign = (cfg.charges[j] * cfg.charges[k]) as f64;
            log_sum +=
                ln_mink_pair_factor(cfg.points[j], cfg.points[k], reg.mu, reg.eps)? * (sign * p);
        }
    }
    let mut wsum = 0.0;
    for j in 0..cfg.len() {
        for k in 0..cfg.len() {
            wsum +=
                (cfg.charges[j] * cfg.charges[k]) as f64 * w.eval(cfg.points[j], cfg.points[k]);
        }
    }
    log_sum += Complex64::new(-0.5 * reg.beta2 * wsum, 0.0);
    if !physical_limit {
        if !(reg.lambda > 0.0) {
            return Err(Error::domain(
                "regulated correlator needs lambda > 0 (or use the physical limit)",
            ));
        }
        log_sum += Complex64::new(p * (q * q) as f64 * (reg.lambda / reg.mu).ln(), 0.0);
    }
    Ok(CorrelatorValue {
        value: log_sum.exp(),
        neutrality_class: q,
    })
}

/// The pointwise bracket of the Minkowski composite-operator correlator at
/// `z`, in light cone components: W-coincidence term, W×W double sum, H×W
/// cross sum and the full H×H double sum (diagonal pairs as raw products at
/// finite `ε`). Shared by the smeared correlator and the series integrands.
pub fn mink_o_bracket(
    z: Vec2,
    cfg: &ChargeConfiguration,
    beta2: f64,
    eps: f64,
    w: &StatePartW,
) -> Tensor2<Complex64> {
    let n = cfg.len();
    let (wcuu, wcuv, wcvv) = w.coincident_second_derivative_lightcone();
    let mut bracket = Tensor2 {
        c: [
            [Complex64::new(wcuu, 0.0), Complex64::new(wcuv, 0.0)],
            [Complex64::new(wcuv, 0.0), Complex64::new(wcvv, 0.0)],
        ],
    };
    let mut hu = vec![Complex64::new(0.0, 0.0); n];
    let mut hv = vec![Complex64::new(0.0, 0.0); n];
    let mut wu = vec![0.0f64; n];
    let mut wv = vec![0.0f64; n];
    for (i, &x) in cfg.points.iter().enumerate() {
        let lc = lightcone(z, x);
        let (a, b) = raw_h_kernels(lc.u, lc.v, eps);
        hu[i] = a;
        hv[i] = b;
        let (gu, gv) = w.grad_x_lightcone(z, x);
        wu[i] = gu;
        wv[i] = gv;
    }
    let c_ww = -beta2;
    let c_hw = beta2 / (2.0 * PI);
    let c_hh = -beta2 / (16.0 * PI * PI);
    for i in 0..n {
        for j in 0..n {
            let sign = (cfg.charges[i] * cfg.charges[j]) as f64;
            let ww_uv = 0.5 * (wu[i] * wv[j] + wv[i] * wu[j]);
            let hw_uu = hu[i] * wu[j];
            let hw_vv = hv[i] * wv[j];
            let hw_uv = 0.5 * (hu[i] * wv[j] + hv[i] * wu[j]);
            let hh_uv = 0.5 * (hu[i] * hv[j] + hv[i] * hu[j]);
            bracket.c[0][0] += Complex64::new(sign * c_ww * wu[i] * wu[j], 0.0)
                + hw_uu * (sign * c_hw)
                + hu[i] * hu[j] * (sign * c_hh);
            bracket.c[1][1] += Complex64::new(sign * c_ww * wv[i] * wv[j], 0.0)
                + hw_vv * (sign * c_hw)
                + hv[i] * hv[j] * (sign * c_hh);
            let off = Complex64::new(sign * c_ww * ww_uv, 0.0)
                + hw_uv * (sign * c_hw)
                + hh_uv * (sign * c_hh);
            bracket.c[0][1] += off;
            bracket.c[1][0] += off;
        }
    }
    bracket
}

/// Smeared Minkowski correlator of the composite operator at UV cutoff `ε`:
/// `ω(T[O_μν(f) ⊗ ⊗_j V_{σ_j β}(x_j)])` in light cone components, with the
/// infrared cutoff already removed (zero tensor unless neutral).
///
/// `with_counterterm` adds `η_μν Σ_j c_{σ_j β} f(x_j)` times the vertex
/// correlator, with `c` from [`counterterm_c`].
pub fn mink_o_corr_smeared(
    f: &SmearingFunction,
    cfg: &ChargeConfiguration,
    reg: &RegulatorParams,
    w: &StatePartW,
    with_counterterm: bool,
    rel_tol: f64,
) -> Result<Tensor2<Complex64>> {
    if !(reg.eps > 0.0) {
        return Err(Error::domain("mink_o_corr_smeared needs eps > 0"));
    }
    if !cfg.is_neutral() {
        return Ok(Tensor2::zero());
    }
    let vertex = mink_vertex_corr(cfg, reg, w, true)?.value;
    let bracket = mink_bracket_smeared(f, cfg, reg, w, with_counterterm, rel_tol)?;
    Ok(bracket.scale_c(vertex))
}

/// The smeared bracket `∫ f(z) [bracket_μν(z)] d²z` (plus the counterterm
/// local parts when requested) without the vertex-correlator prefactor; the
/// building block of the series integrands.
pub fn mink_bracket_smeared(
    f: &SmearingFunction,
    cfg: &ChargeConfiguration,
    reg: &RegulatorParams,
    w: &StatePartW,
    with_counterterm: bool,
    rel_tol: f64,
) -> Result<Tensor2<Complex64>> {
    let c_f = f.centroid();
    let span = std::f64::consts::SQRT_2 * f.support_radius(1e-16) + 1e-9;
    let (uc, vc) = (c_f.0 - c_f.1, c_f.0 + c_f.1);
    let us: Vec<f64> = cfg.points.iter().map(|&x| x.0 - x.1).collect();
    let vs: Vec<f64> = cfg.points.iter().map(|&x| x.0 + x.1).collect();
    let sum_uv: Vec<f64> = us.iter().zip(&vs).map(|(u, v)| u + v).collect();
    let mut integrand = |a: f64, b: f64| -> Tensor2<Complex64> {
        let z = Vec2(0.5 * (a + b), 0.5 * (b - a));
        mink_o_bracket(z, cfg, reg.beta2, reg.eps, w).scale(f.value(z))
    };
    let (smeared, _) = iterated_uv(
        &mut integrand,
        (uc - span, uc + span),
        &us,
        (vc - span, vc + span),
        &mut |a: f64| {
            let mut sp = vs.clone();
            sp.extend(sum_uv.iter().map(|s| s - a));
            sp
        },
        rel_tol,
        1e-300,
    )?;
    let mut total = smeared.scale(0.5); // d²z = (1/2) du dv
    if with_counterterm {
        let c = counterterm_c(reg.beta2, reg.mu, reg.eps)?;
        // η_μν in light cone components: η_uv = η_vu = -1/2.
        let mut local = Complex64::new(0.0, 0.0);
        for &x in &cfg.points {
            local += c * f.value(x);
        }
        total.c[0][1] += -0.5 * local;
        total.c[1][0] += -0.5 * local;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::euclid_cov;
    use crate::geom::sym_outer;
    use crate::integrate::rng::CounterRng;

    fn reg(lambda: f64, eps: f64, beta2: f64) -> RegulatorParams {
        RegulatorParams::new(lambda, eps, 1.0, beta2).unwrap()
    }

    #[test]
    fn vertex_examples() {
        let cfg = ChargeConfiguration::new(vec![], vec![]).unwrap();
        let v = euclid_vertex_corr(&cfg, &reg(1.0, 0.0, 2.0 * PI), true).unwrap();
        assert_eq!(v.value, 1.0);
        // Neutral pair at distance 2, β² = 2π: (4)^{-1/2} = 0.5.
        let cfg =
            ChargeConfiguration::new(vec![Vec2(0.0, 0.0), Vec2(2.0, 0.0)], vec![1, -1]).unwrap();
        let v = euclid_vertex_corr(&cfg, &reg(1.0, 0.0, 2.0 * PI), true).unwrap();
        assert!((v.value - 0.5).abs() < 1e-14);
        // Single charge in the physical limit: super-selection.
        let cfg = ChargeConfiguration::new(vec![Vec2(0.0, 0.0)], vec![1]).unwrap();
        let v = euclid_vertex_corr(&cfg, &reg(1.0, 0.0, 2.0 * PI), true).unwrap();
        assert_eq!(v.value, 0.0);
        assert_eq!(v.neutrality_class, 1);
    }

    #[test]
    fn vertex_regulated_lambda_exponent() {
        // ln(regulated) is linear in ln Λ with slope p (Σσ)².
        let cfg = ChargeConfiguration::new(
            vec![Vec2(0.0, 0.0), Vec2(1.0, 0.5), Vec2(-0.3, 0.8)],
            vec![1, 1, -1],
        )
        .unwrap();
        let b2 = 2.0 * PI;
        let p = b2 / (4.0 * PI);
        let v1 = euclid_vertex_corr(&cfg, &reg(1e-2, 0.0, b2), false).unwrap();
        let v2 = euclid_vertex_corr(&cfg, &reg(1e-4, 0.0, b2), false).unwrap();
        let slope = (v1.value.ln() - v2.value.ln()) / ((1e-2f64).ln() - (1e-4f64).ln());
        assert!((slope - p).abs() < 1e-12);
    }

    #[test]
    fn vertex_charge_conjugation_and_permutation() {
        let mut rng = CounterRng::for_sample(5, 0);
        for _ in 0..20 {
            let pts: Vec<Vec2> = (0..4)
                .map(|_| Vec2(4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0))
                .collect();
            let charges = vec![1i8, -1, 1, -1];
            let cfg = ChargeConfiguration::new(pts.clone(), charges.clone()).unwrap();
            let v = euclid_vertex_corr(&cfg, &reg(1.0, 0.0, PI), true).unwrap().value;
            let conj =
                ChargeConfiguration::new(pts.clone(), charges.iter().map(|s| -s).collect())
                    .unwrap();
            let vc = euclid_vertex_corr(&conj, &reg(1.0, 0.0, PI), true).unwrap().value;
            assert_eq!(v, vc);
            let permuted = ChargeConfiguration::new(
                vec![pts[2], pts[0], pts[3], pts[1]],
                vec![1, 1, -1, -1],
            )
            .unwrap();
            let vp = euclid_vertex_corr(&permuted, &reg(1.0, 0.0, PI), true)
                .unwrap()
                .value;
            assert!((v - vp).abs() <= 1e-13 * v.abs());
        }
    }

    #[test]
    fn o_corr_neutrality_and_empty() {
        let f = SmearingFunction::gaussian(1.0, Vec2::ZERO, 1.0);
        let cfg = ChargeConfiguration::new(vec![Vec2(1.0, 0.0)], vec![1]).unwrap();
        let t = euclid_o_corr_smeared(&f, &cfg, 2.0 * PI, 1.0, 1e-7).unwrap();
        assert_eq!(t.max_abs(), 0.0);
        let empty = ChargeConfiguration::new(vec![], vec![]).unwrap();
        let t = euclid_o_corr_smeared(&f, &empty, 2.0 * PI, 1.0, 1e-7).unwrap();
        assert_eq!(t.max_abs(), 0.0);
    }

    /// Gaussian-measure consistency: the regulated correlator kernel
    /// assembled directly from covariance calls equals the closed form, to
    /// round-off.
    #[test]
    fn regulated_kernel_matches_direct_covariance_assembly() {
        let b2 = 2.0 * PI;
        let rg = reg(0.7, 0.3, b2);
        let cfg =
            ChargeConfiguration::new(vec![Vec2(0.4, -0.2), Vec2(-0.6, 0.9)], vec![1, -1]).unwrap();
        let z = Vec2(0.15, 0.35);
        let n = cfg.len();
        // Direct assembly: -β² (με)^{-nβ²/4π} exp[-(β²/2) ΣΣ σσ C(x_j,x_k)]
        //                  × Σ_{j,k} σ_j σ_k ∂_μ C(x_j,z) ∂_ν C(x_k,z).
        let norm = (rg.mu * rg.eps).powf(-(n as f64) * b2 / (4.0 * PI));
        let mut ssum = 0.0;
        for j in 0..n {
            for k in 0..n {
                let c = if j == k {
                    -(rg.lambda * rg.lambda * rg.eps * rg.eps).ln() / (4.0 * PI)
                } else {
                    euclid_cov(cfg.points[j], cfg.points[k], &rg).unwrap()
                };
                ssum += (cfg.charges[j] * cfg.charges[k]) as f64 * c;
            }
        }
        let grad_c = |x: Vec2, z: Vec2| -> Vec2 {
            let d = x - z;
            d.scale(-1.0 / (2.0 * PI * (d.norm2() + rg.eps * rg.eps)))
        };
        let mut kernel = Tensor2::zero();
        for j in 0..n {
            for k in 0..n {
                kernel = kernel.add_t(
                    sym_outer(grad_c(cfg.points[j], z), grad_c(cfg.points[k], z))
                        .scale((cfg.charges[j] * cfg.charges[k]) as f64),
                );
            }
        }
        let direct = kernel.scale(-b2 * norm * (-0.5 * b2 * ssum).exp());

        // Closed form of the same kernel (neutral pair: Λ drops out).
        let p = rg.p();
        let r2 = (cfg.points[0] - cfg.points[1]).norm2() + rg.eps * rg.eps;
        let log_sum = -p * (rg.mu * rg.mu * r2).ln();
        let mut sums = Tensor2::zero();
        for j in 0..n {
            for k in 0..n {
                let dj = cfg.points[j] - z;
                let dk = cfg.points[k] - z;
                let den_j = dj.norm2() + rg.eps * rg.eps;
                let den_k = dk.norm2() + rg.eps * rg.eps;
                sums = sums.add_t(
                    sym_outer(dj, dk)
                        .scale((cfg.charges[j] * cfg.charges[k]) as f64 / (den_j * den_k)),
                );
            }
        }
        let closed = sums.scale(-b2 / (4.0 * PI * PI) * log_sum.exp());
        assert!(
            direct.sub_t(closed).max_abs() <= 1e-12 * closed.max_abs(),
            "direct={direct:?} closed={closed:?}"
        );
    }

    #[test]
    fn o_corr_matches_regulated_extrapolation() {
        // Physical-limit smeared O correlator against the ε-regulated
        // evaluation with the divergent part subtracted, extrapolated ε → 0.
        let f = SmearingFunction::gaussian(1.0, Vec2::ZERO, 1.0);
        let b2 = 2.0 * PI;
        let mu = 1.0;
        let p = b2 / (4.0 * PI);
        let cfg =
            ChargeConfiguration::new(vec![Vec2(0.8, 0.0), Vec2(-0.7, 0.4)], vec![1, -1]).unwrap();
        let exact = euclid_o_corr_smeared(&f, &cfg, b2, mu, 1e-8).unwrap();

        let reg_eval = |eps: f64| -> Tensor2<f64> {
            let r2 = (cfg.points[0] - cfg.points[1]).norm2() + eps * eps;
            let log_sum = -p * (mu * mu * r2).ln();
            let mut bracket = Tensor2::zero();
            for &x in &cfg.points {
                let u = crate::renorm::u_reg_shifted(x, &f, eps, 1e-8).unwrap();
                // Subtract the local divergent part -π δ ln(με) f(x).
                let div = Tensor2::diag(-PI * (mu * eps).ln() * f.value(x));
                bracket = bracket.add_t(u.sub_t(div));
            }
            let cross = crate::renorm::cross_term_smeared_reg(
                &f,
                cfg.points[0],
                cfg.points[1],
                eps,
                1e-8,
            )
            .unwrap();
            bracket = bracket.add_t(cross.scale(-2.0));
            bracket.scale(-b2 / (4.0 * PI * PI) * log_sum.exp())
        };
        // Two-point Richardson in ε² (the remainder is O(ε² ln ε) here).
        let e1 = reg_eval(2e-3);
        let e2 = reg_eval(1e-3);
        let extrap = e2.scale(4.0 / 3.0).sub_t(e1.scale(1.0 / 3.0));
        assert!(
            extrap.sub_t(exact).max_abs() <= 1e-5 * exact.max_abs(),
            "extrap={extrap:?} exact={exact:?}"
        );
    }

    #[test]
    fn t_corr_quantum_factor() {
        // Quantum correction multiplies the vertex part by 1 - β²/8π = 0.75
        // at β² = 2π.
        let f = SmearingFunction::gaussian(1.0, Vec2::ZERO, 1.0);
        let cfg = ChargeConfiguration::new(vec![Vec2(0.5, 0.2)], vec![-1]).unwrap();
        let classical = euclid_t_corr_smeared(&f, &cfg, 2.0 * PI, 1.0, 0.3, false, 1e-7).unwrap();
        let corrected = euclid_t_corr_smeared(&f, &cfg, 2.0 * PI, 1.0, 0.3, true, 1e-7).unwrap();
        let ratio = corrected.c[0][0] / classical.c[0][0];
        assert!((ratio - 0.75).abs() < 1e-12);
        // β² → 0: corrected and classical coincide.
        let small = 1e-9;
        let a = euclid_t_corr_smeared(&f, &cfg, small, 1.0, 0.3, false, 1e-6).unwrap();
        let b = euclid_t_corr_smeared(&f, &cfg, small, 1.0, 0.3, true, 1e-6).unwrap();
        assert!((a.c[0][0] - b.c[0][0]).abs() <= 1e-9 * a.c[0][0].abs());
        // |Σσ| ≥ 2 vanishes.
        let cfg2 =
            ChargeConfiguration::new(vec![Vec2(0.0, 0.0), Vec2(1.0, 0.0)], vec![1, 1]).unwrap();
        let t = euclid_t_corr_smeared(&f, &cfg2, 2.0 * PI, 1.0, 0.3, true, 1e-7).unwrap();
        assert_eq!(t.max_abs(), 0.0);
    }

    #[test]
    fn t_corr_traceless_part_eps_independent() {
        // The regulated traceless combination of the composite part is
        // ε-independent to the stated level: the divergent part is pure
        // trace and drops out.
        let f = SmearingFunction::gaussian(1.0, Vec2::ZERO, 1.0);
        let b2 = 2.0 * PI;
        let p = b2 / (4.0 * PI);
        let cfg =
            ChargeConfiguration::new(vec![Vec2(0.8, 0.0), Vec2(-0.7, 0.4)], vec![1, -1]).unwrap();
        let traceless_reg = |eps: f64| -> Tensor2<f64> {
            let r2 = (cfg.points[0] - cfg.points[1]).norm2() + eps * eps;
            let log_sum = -p * r2.ln();
            let mut bracket = Tensor2::zero();
            for &x in &cfg.points {
                bracket = bracket.add_t(crate::renorm::u_reg_shifted(x, &f, eps, 1e-9).unwrap());
            }
            let cross = crate::renorm::cross_term_smeared_reg(
                &f,
                cfg.points[0],
                cfg.points[1],
                eps,
                1e-9,
            )
            .unwrap();
            bracket = bracket.add_t(cross.scale(-2.0));
            bracket
                .scale(-b2 / (4.0 * PI * PI) * log_sum.exp())
                .traceless_euclid()
        };
        let a = traceless_reg(1e-4);
        let b = traceless_reg(5e-5);
        assert!(
            a.sub_t(b).max_abs() <= 1e-6 * a.max_abs().max(1e-6),
            "a={a:?} b={b:?}"
        );
    }

    #[test]
    fn mink_vertex_examples() {
        let w0 = StatePartW::vacuum();
        let cfg = ChargeConfiguration::new(vec![], vec![]).unwrap();
        let v = mink_vertex_corr(&cfg, &reg(1.0, 0.0, 2.0 * PI), &w0, true).unwrap();
        assert_eq!(v.value, Complex64::new(1.0, 0.0));
        // Spacelike pair: Δx¹ = 2, -uv = 4, value 4^{-1/2} = 0.5 real.
        let cfg =
            ChargeConfiguration::new(vec![Vec2(0.0, 0.0), Vec2(0.0, 2.0)], vec![1, -1]).unwrap();
        let v = mink_vertex_corr(&cfg, &reg(1.0, 0.0, 2.0 * PI), &w0, true).unwrap();
        assert!((v.value - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        // Timelike pair: Δx⁰ = 2; the pair factor is (-4 + i0)^{-1/2} with
        // ln(-4+i0) = ln 4 + iπ, so the value is 0.5 e^{-iπ/2} = -0.5i.
        // Frozen from the ε > 0 branch-tracking oracle below.
        let cfg =
            ChargeConfiguration::new(vec![Vec2(2.0, 0.0), Vec2(0.0, 0.0)], vec![1, -1]).unwrap();
        let v = mink_vertex_corr(&cfg, &reg(1.0, 0.0, 2.0 * PI), &w0, true).unwrap();
        assert!(
            (v.value - Complex64::new(0.0, -0.5)).norm() < 1e-14,
            "value={}",
            v.value
        );
        // Branch-tracking oracle: evaluate at ε > 0, shrink toward zero.
        let mut prev = Complex64::new(10.0, 10.0);
        for &eps in &[1e-2, 1e-4, 1e-6] {
            let ve = mink_vertex_corr(&cfg, &reg(1.0, eps, 2.0 * PI), &w0, true)
                .unwrap()
                .value;
            assert!((ve - v.value).norm() < (prev - v.value).norm());
            prev = ve;
        }
        assert!((prev - v.value).norm() < 1e-5);
        // Non-neutral: physical limit vanishes.
        let cfg = ChargeConfiguration::new(vec![Vec2(0.0, 0.0)], vec![1]).unwrap();
        let v = mink_vertex_corr(&cfg, &reg(1.0, 0.0, 2.0 * PI), &w0, true).unwrap();
        assert_eq!(v.value.norm(), 0.0);
    }

    #[test]
    fn mink_vertex_w_factor() {
        // The W part multiplies by exp[-(β²/2) ΣΣ σσ W]; the double sum is
        // the difference quadratic form, nonnegative for the mode family, so
        // the factor has modulus ≤ 1.
        let w = StatePartW::default_two_mode();
        let b2 = 2.0 * PI;
        let cfg =
            ChargeConfiguration::new(vec![Vec2(0.0, 0.3), Vec2(0.0, 2.0)], vec![1, -1]).unwrap();
        let v0 = mink_vertex_corr(&cfg, &reg(1.0, 0.0, b2), &StatePartW::vacuum(), true)
            .unwrap()
            .value;
        let vw = mink_vertex_corr(&cfg, &reg(1.0, 0.0, b2), &w, true).unwrap().value;
        let qf = w.difference_quadratic_form(&[cfg.points[0]], &[cfg.points[1]]);
        assert!(qf >= 0.0);
        assert!((vw / v0).norm() <= 1.0 + 1e-12);
        assert!(((vw / v0).norm() - (-0.5 * b2 * qf).exp()).abs() < 1e-12);
    }

    #[test]
    fn causal_factorisation() {
        // Two neutral groups at large spacelike separation, W = 0: the
        // correlator of the union equals the product of the group correlators
        // times the cross pair factors.
        let w0 = StatePartW::vacuum();
        let rg = reg(1.0, 0.0, 2.0 * PI);
        let p = rg.p();
        let group_a = vec![Vec2(0.1, 0.2), Vec2(-0.3, 0.5)];
        let group_b = vec![Vec2(0.0, 100.0), Vec2(0.4, 101.5)];
        let charges = vec![1i8, -1];
        let cfg_a = ChargeConfiguration::new(group_a.clone(), charges.clone()).unwrap();
        let cfg_b = ChargeConfiguration::new(group_b.clone(), charges.clone()).unwrap();
        let union = ChargeConfiguration::new(
            group_a.iter().chain(&group_b).copied().collect(),
            vec![1, -1, 1, -1],
        )
        .unwrap();
        let vu = mink_vertex_corr(&union, &rg, &w0, true).unwrap().value;
        let va = mink_vertex_corr(&cfg_a, &rg, &w0, true).unwrap().value;
        let vb = mink_vertex_corr(&cfg_b, &rg, &w0, true).unwrap().value;
        let mut cross = Complex64::new(0.0, 0.0);
        for (i, &xa) in group_a.iter().enumerate() {
            for (j, &xb) in group_b.iter().enumerate() {
                let sign = (charges[i] * charges[j]) as f64;
                cross += ln_mink_pair_factor(xa, xb, 1.0, 0.0).unwrap() * (sign * p);
            }
        }
        let factorised = va * vb * cross.exp();
        assert!(
            (vu - factorised).norm() <= 1e-10 * vu.norm(),
            "union={vu} factorised={factorised}"
        );
    }

    #[test]
    fn mink_o_smeared_sanity() {
        let f = SmearingFunction::gaussian(1.0, Vec2::ZERO, 1.0);
        let rg = reg(1.0, 0.05, 2.0 * PI);
        // Non-neutral → zero tensor.
        let cfg = ChargeConfiguration::new(vec![Vec2(0.2, 0.1)], vec![1]).unwrap();
        let t = mink_o_corr_smeared(&f, &cfg, &rg, &StatePartW::vacuum(), true, 1e-5).unwrap();
        assert_eq!(t.max_abs(), 0.0);
        // W = 0, n = 0 → zero tensor (all sums empty).
        let cfg = ChargeConfiguration::new(vec![], vec![]).unwrap();
        let t = mink_o_corr_smeared(&f, &cfg, &rg, &StatePartW::vacuum(), false, 1e-5).unwrap();
        assert_eq!(t.max_abs(), 0.0);
    }

    #[test]
    fn mink_o_counterterm_removes_log_divergence() {
        // ε-ladder slope of the uv component with and without counterterm.
        let f = SmearingFunction::gaussian(1.0, Vec2::ZERO, 1.0);
        let w0 = StatePartW::vacuum();
        let cfg =
            ChargeConfiguration::new(vec![Vec2(0.3, 0.8), Vec2(-0.2, -0.6)], vec![1, -1]).unwrap();
        let ladder = [1e-1, 3e-2, 1e-2, 3e-3];
        let slope = |with_ct: bool| -> Complex64 {
            let ys: Vec<Complex64> = ladder
                .iter()
                .map(|&eps| {
                    let rg = reg(1.0, eps, 2.0 * PI);
                    mink_o_corr_smeared(&f, &cfg, &rg, &w0, with_ct, 1e-6)
                        .unwrap()
                        .c[0][1]
                })
                .collect();
            crate::verify::fit_log_ladder_complex(&ladder, &ys).1
        };
        let s_raw = slope(false);
        let s_ct = slope(true);
        assert!(
            s_ct.norm() < 0.01 * s_raw.norm(),
            "raw slope {s_raw}, counterterm slope {s_ct}"
        );
    }
}
