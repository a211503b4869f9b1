//! Order-by-order assembly of the perturbative expectation values.
//!
//! The normalised interacting value is a quotient of two series: the
//! denominator sums vertex-correlator integrals against the adiabatic
//! cutoff, the numerator sums correlators with one composite-operator (or
//! stress-tensor) insertion. At order `m` the physical-limit integrand over
//! `m` positive and `m` negative insertions is
//!
//! ```text
//! D_m = μ^{-mβ²/2π}/(m!)² ∬ [Π(x_j-x_k)²(y_j-y_k)² / Π(x_j-y_k)²]^{β²/4π}
//!         Π g(x_i) g(y_i)
//! ```
//!
//! evaluated by pair-sampled Monte Carlo with the determinant ratio in
//! log space. Numerator terms carry the smeared kernels of
//! [`crate::renorm`] inside the integrand. Minkowski terms keep the UV
//! cutoff `ε` finite and are extrapolated over a ladder.
//!
//! Conservation residuals evaluate the stress-tensor numerator smeared with
//! `∂^μ f`; the Euclidean integrand is in closed form (the smeared kernels
//! reduce exactly through the fundamental-solution identity), the Minkowski
//! one keeps the bracket under a per-sample quadrature. Corrected and
//! uncorrected variants share every sample, so their ratio carries almost
//! no Monte Carlo noise.

use crate::correlators::ChargeConfiguration;
use crate::covariance::{RegulatorParams, StatePartW};
use crate::error::{Error, Result};
use crate::geom::{Tensor2, Vec2};
use crate::integrate::cubature::iterated_uv;
use crate::integrate::mc::{mc_run, McEstimate};

use crate::integrate::sampler::{pair_kernel_integral, MinkPairSampler, PairSampler};
use crate::renorm::{cons_redef_c, cross_term_fast, u_ren_shifted, ShiftedKernelGrid};
use crate::smearing::{PlateauCutoff, Smearing, SmearingFunction};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Monte Carlo budget for series terms.
///
/// `n_base` is the per-term sample count for cheap integrands (denominator,
/// vertex numerator, conservation residuals). Composite-operator numerator
/// terms run smeared kernels per sample, so their budget is scaled down by
/// `4^(m-1)` at order `m` to keep runtimes at desk scale; the statistical
/// error is reported either way.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct McBudget {
    pub n_base: u64,
    pub seed: u64,
    /// Relative tolerance of the per-sample smeared kernels.
    pub quad_tol: f64,
}

impl McBudget {
    pub fn new(n_base: u64, seed: u64) -> Self {
        McBudget {
            n_base,
            seed,
            quad_tol: 1e-5,
        }
    }

    fn n_for_o_term(&self, m: usize) -> u64 {
        let shift = 2 * (m.saturating_sub(1)).min(8);
        (self.n_base >> shift).max(10_000)
    }

    fn term_seed(&self, role: u64, m: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E3779B97F4A7C15)
            .wrapping_add(role * 1_000_003 + m as u64)
    }
}

/// One order of the Gell-Mann-Low series as an archived record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub signature: String,
    pub role: String,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Flattened components: scalars `[re]`/`[re, im]`, tensors row-major.
    pub mean: Vec<f64>,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
}

impl SeriesTerm {
    pub fn scalar(sig: &str, role: &str, m: usize, eps: Option<f64>, e: &McEstimate<f64>) -> Self {
        SeriesTerm {
            signature: sig.into(),
            role: role.into(),
            m,
            eps,
            mean: vec![e.mean],
            stderr: e.stderr,
            n: e.n_samples,
            seed: e.seed,
        }
    }

    pub fn complex(
        sig: &str,
        role: &str,
        m: usize,
        eps: Option<f64>,
        e: &McEstimate<Complex64>,
    ) -> Self {
        SeriesTerm {
            signature: sig.into(),
            role: role.into(),
            m,
            eps,
            mean: vec![e.mean.re, e.mean.im],
            stderr: e.stderr,
            n: e.n_samples,
            seed: e.seed,
        }
    }

    pub fn tensor(
        sig: &str,
        role: &str,
        m: usize,
        eps: Option<f64>,
        e: &McEstimate<Tensor2<f64>>,
    ) -> Self {
        SeriesTerm {
            signature: sig.into(),
            role: role.into(),
            m,
            eps,
            mean: e.mean.c.iter().flatten().copied().collect(),
            stderr: e.stderr,
            n: e.n_samples,
            seed: e.seed,
        }
    }

    pub fn tensor_c(
        sig: &str,
        role: &str,
        m: usize,
        eps: Option<f64>,
        e: &McEstimate<Tensor2<Complex64>>,
    ) -> Self {
        SeriesTerm {
            signature: sig.into(),
            role: role.into(),
            m,
            eps,
            mean: e
                .mean
                .c
                .iter()
                .flatten()
                .flat_map(|z| [z.re, z.im])
                .collect(),
            stderr: e.stderr,
            n: e.n_samples,
            seed: e.seed,
        }
    }
}

fn factorial(n: usize) -> f64 {
    (2..=n).map(|k| k as f64).product()
}

/// `p Σ_{j<k} [ln μ²(x_j-x_k)² + ln μ²(y_j-y_k)²] - p Σ_{j,k} ln μ²(x_j-y_k)²`:
/// the log of the determinant-ratio factor (the μ powers combine to
/// `μ^{-mβ²/2π}`).
fn euclid_detratio_log(xs: &[Vec2], ys: &[Vec2], p: f64, mu: f64) -> f64 {
    let mu2 = mu * mu;
    let mut acc = 0.0;
    let m = xs.len();
    for j in 0..m {
        for k in (j + 1)..m {
            acc += (mu2 * (xs[j] - xs[k]).norm2()).ln();
            acc += (mu2 * (ys[j] - ys[k]).norm2()).ln();
        }
    }
    for j in 0..m {
        for k in 0..m {
            acc -= (mu2 * (xs[j] - ys[k]).norm2()).ln();
        }
    }
    p * acc
}

/// Complex log of the Minkowski determinant-ratio factor at UV cutoff `ε`,
/// assembled from principal logs of the pair factors.
fn mink_detratio_log(xs: &[Vec2], ys: &[Vec2], p: f64, mu: f64, eps: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let m = xs.len();
    for j in 0..m {
        for k in (j + 1)..m {
            acc += crate::correlators::ln_mink_pair_factor(xs[j], xs[k], mu, eps).unwrap();
            acc += crate::correlators::ln_mink_pair_factor(ys[j], ys[k], mu, eps).unwrap();
        }
    }
    for j in 0..m {
        for k in 0..m {
            acc -= crate::correlators::ln_mink_pair_factor(xs[j], ys[k], mu, eps).unwrap();
        }
    }
    acc * p
}

fn product_g(g: &PlateauCutoff, xs: &[Vec2], ys: &[Vec2]) -> f64 {
    let mut prod = 1.0;
    for (&x, &y) in xs.iter().zip(ys) {
        prod *= g.value(x) * g.value(y);
    }
    prod
}

fn charges_for(m: usize) -> Vec<i8> {
    let mut c = vec![1i8; m];
    c.extend(std::iter::repeat(-1).take(m));
    c
}

// ---------------------------------------------------------------------------
// Euclidean series terms
// ---------------------------------------------------------------------------

/// Order-`m` denominator term.
pub fn euclid_denominator_term(
    m: usize,
    g: &PlateauCutoff,
    beta2: f64,
    mu: f64,
    mc: &McBudget,
) -> Result<McEstimate<f64>> {
    let seed = mc.term_seed(1, m);
    if m == 0 {
        return Ok(McEstimate {
            mean: 1.0,
            stderr: 0.0,
            n_samples: 0,
            seed,
        });
    }
    let p = beta2 / (4.0 * PI);
    let sampler = PairSampler::new(g.clone(), p)?;
    let comb = 1.0 / (factorial(m) * factorial(m));
    let est = mc_run(mc.n_base, seed, |_, rng| {
        let (xs, ys, w) = sampler.sample_pairs(m, rng);
        euclid_detratio_log(&xs, &ys, p, mu).exp() * product_g(g, &xs, &ys) * w
    })?;
    Ok(McEstimate {
        mean: est.mean * comb,
        stderr: est.stderr * comb,
        n_samples: est.n_samples,
        seed,
    })
}

/// Order-`m` numerator term for the composite operator `∂_μφ ∂_νφ`.
///
/// The shifted renormalised kernel is cached on a grid covering the cutoff
/// support (built once per term with the fixed-rule quadrature), the cross
/// terms use the fixed-rule two-patch evaluation; both are verified against
/// the adaptive engines in the kernel tests.
pub fn euclid_numerator_term_o(
    m: usize,
    f: &SmearingFunction,
    g: &PlateauCutoff,
    beta2: f64,
    mu: f64,
    mc: &McBudget,
) -> Result<McEstimate<Tensor2<f64>>> {
    let seed = mc.term_seed(2, m);
    if m == 0 {
        return Ok(McEstimate {
            mean: Tensor2::zero(),
            stderr: 0.0,
            n_samples: 0,
            seed,
        });
    }
    let p = beta2 / (4.0 * PI);
    let sampler = PairSampler::new(g.clone(), p)?;
    let comb = -beta2 / (4.0 * PI * PI) / (factorial(m) * factorial(m));
    let grid = ShiftedKernelGrid::build(f, mu, g.outer_radius() + 0.2, 0.08);
    let est = mc_run(mc.n_for_o_term(m), seed, |_, rng| {
        let (xs, ys, w) = sampler.sample_pairs(m, rng);
        let mut bracket = Tensor2::zero();
        for &x in xs.iter().chain(&ys) {
            bracket = bracket.add_t(grid.eval(x));
        }
        let all: Vec<Vec2> = xs.iter().chain(&ys).copied().collect();
        for j in 0..all.len() {
            for k in (j + 1)..all.len() {
                let sign = if (j < m) == (k < m) { 1.0 } else { -1.0 };
                bracket = bracket.add_t(cross_term_fast(f, all[j], all[k]).scale(2.0 * sign));
            }
        }
        bracket.scale(euclid_detratio_log(&xs, &ys, p, mu).exp() * product_g(g, &xs, &ys) * w)
    })?;
    Ok(McEstimate {
        mean: est.mean.scale(comb),
        stderr: est.stderr * comb.abs(),
        n_samples: est.n_samples,
        seed,
    })
}

/// Order-`m` vertex numerator term (`n = 2m+1` insertions, the extra one
/// smeared by `g·f`), for the `V_{+β}` or `V_{-β}` factor of the stress
/// tensor. Combinatorial factor `1/(m!(m+1)!)`.
pub fn euclid_numerator_term_vertex(
    m: usize,
    f: &SmearingFunction,
    g: &PlateauCutoff,
    beta2: f64,
    mu: f64,
    charge: crate::correlators::VertexCharge,
    mc: &McBudget,
) -> Result<McEstimate<f64>> {
    let seed = mc.term_seed(3, m);
    let p = beta2 / (4.0 * PI);
    let sampler = PairSampler::new(g.clone(), p)?;
    let pairs = m + 1;
    let comb = 1.0 / (factorial(m) * factorial(m + 1));
    let plus = charge == crate::correlators::VertexCharge::Plus;
    let est = mc_run(mc.n_base, seed, |_, rng| {
        let (xs, ys, w) = sampler.sample_pairs(pairs, rng);
        // The smeared insertion joins the positive group for V_{+β} (resp.
        // negative for V_{-β}); by exchange symmetry average f over it.
        let smear_pts = if plus { &xs } else { &ys };
        let favg: f64 =
            smear_pts.iter().map(|&x| f.value(x)).sum::<f64>() / pairs as f64;
        euclid_detratio_log(&xs, &ys, p, mu).exp() * product_g(g, &xs, &ys) * favg * w
    })?;
    Ok(McEstimate {
        mean: est.mean * comb * pairs as f64,
        stderr: est.stderr * comb * pairs as f64,
        n_samples: est.n_samples,
        seed,
    })
}

/// The bound constant: `K = ∬ [μ²(x-y)²]^{-β²/4π} g(x) g(y) d²x d²y` by
/// cubature.
pub fn estimate_k(g: &PlateauCutoff, beta2: f64, mu: f64) -> Result<f64> {
    let p = beta2 / (4.0 * PI);
    Ok(mu.powf(-2.0 * p) * pair_kernel_integral(g, p)?)
}

/// Majorant terms `C n² K^n (n!)^{-1}` (for `β² < 2π`) or
/// `C n² K^n (n!)^{β²/2π - 2}` (for `2π ≤ β² < 4π`), `n = 0..=n_max`.
pub fn series_majorant(c: f64, k: f64, beta2: f64, n_max: usize) -> Vec<f64> {
    let expo = if beta2 < 2.0 * PI {
        -1.0
    } else {
        beta2 / (2.0 * PI) - 2.0
    };
    (0..=n_max)
        .map(|n| c * (n * n) as f64 * k.powi(n as i32) * factorial(n).powf(expo))
        .collect()
}

/// Truncated interacting expectation value: numerator and denominator sums,
/// the quotient, and first-order error propagation
/// `δ(N/D) = |1/D| δN + |N/D²| δD`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GlowValueEuclid {
    pub value: Tensor2<f64>,
    pub stderr: f64,
    pub numerator: Tensor2<f64>,
    pub numerator_err: f64,
    pub denominator: f64,
    pub denominator_err: f64,
    pub terms: Vec<SeriesTerm>,
}

/// Which operator the series evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// `∂_μφ ∂_νφ`.
    OTensor,
    /// Stress tensor; `quantum_corrected` rescales the vertex coupling by
    /// `1 - β²/8π`.
    TTensor { quantum_corrected: bool },
}

/// Assembles the truncated Euclidean Gell-Mann-Low quotient at orders
/// `m ≤ n_max` per role. The denominator must stay near its leading value;
/// an estimate below 0.5 aborts.
pub fn glow_value_euclid(
    op: OperatorKind,
    f: &SmearingFunction,
    g: &PlateauCutoff,
    beta2: f64,
    mu: f64,
    n_max: usize,
    mc: &McBudget,
) -> Result<GlowValueEuclid> {
    let mut terms = vec![];
    let mut denom = 0.0;
    let mut denom_var = 0.0;
    let free_theory = g.g0 == 0.0;
    for m in 0..=n_max {
        let t = if free_theory && m > 0 {
            McEstimate {
                mean: 0.0,
                stderr: 0.0,
                n_samples: 0,
                seed: mc.term_seed(1, m),
            }
        } else {
            euclid_denominator_term(m, g, beta2, mu, mc)?
        };
        denom += t.mean;
        denom_var += t.stderr * t.stderr;
        terms.push(SeriesTerm::scalar("euclid", "denominator", m, None, &t));
    }
    let mut num = Tensor2::zero();
    let mut num_var = 0.0;
    for m in 0..=n_max {
        let t = if free_theory && m > 0 {
            McEstimate {
                mean: Tensor2::zero(),
                stderr: 0.0,
                n_samples: 0,
                seed: mc.term_seed(2, m),
            }
        } else {
            euclid_numerator_term_o(m, f, g, beta2, mu, mc)?
        };
        let contribution = match op {
            OperatorKind::OTensor => t.mean,
            OperatorKind::TTensor { .. } => t.mean.traceless_euclid(),
        };
        num = num.add_t(contribution);
        num_var += t.stderr * t.stderr;
        terms.push(SeriesTerm::tensor("euclid", "numerator-O", m, None, &t));
    }
    if let OperatorKind::TTensor { quantum_corrected } = op {
        let coupling = if quantum_corrected {
            1.0 - beta2 / (8.0 * PI)
        } else {
            1.0
        };
        for m in 0..=n_max {
            for charge in [
                crate::correlators::VertexCharge::Plus,
                crate::correlators::VertexCharge::Minus,
            ] {
                let t = if free_theory {
                    McEstimate {
                        mean: 0.0,
                        stderr: 0.0,
                        n_samples: 0,
                        seed: mc.term_seed(3, m),
                    }
                } else {
                    euclid_numerator_term_vertex(m, f, g, beta2, mu, charge, mc)?
                };
                num = num.add_t(Tensor2::diag(coupling * t.mean));
                num_var += coupling * coupling * t.stderr * t.stderr;
                terms.push(SeriesTerm::scalar(
                    "euclid",
                    "numerator-vertex",
                    m,
                    None,
                    &t,
                ));
            }
        }
    }
    let num_err = num_var.sqrt();
    let denom_err = denom_var.sqrt();
    if denom < 0.5 {
        return Err(Error::Series(format!(
            "denominator estimate {denom} < 0.5; series assembly inconsistent"
        )));
    }
    let value = num.scale(1.0 / denom);
    let stderr = num_err / denom + value.max_abs() / denom * denom_err;
    Ok(GlowValueEuclid {
        value,
        stderr,
        numerator: num,
        numerator_err: num_err,
        denominator: denom,
        denominator_err: denom_err,
        terms,
    })
}

// ---------------------------------------------------------------------------
// Minkowski series terms
// ---------------------------------------------------------------------------

/// Order-`m` Minkowski denominator term at UV cutoff `ε`:
/// `(-1)^m/(m!)² ∬ detratio(ε) exp[-(β²/2) W-form] Π g g`.
pub fn mink_denominator_term(
    m: usize,
    g: &PlateauCutoff,
    beta2: f64,
    mu: f64,
    eps: f64,
    w: &StatePartW,
    mc: &McBudget,
) -> Result<McEstimate<Complex64>> {
    let seed = mc.term_seed(4, m);
    if m == 0 {
        return Ok(McEstimate {
            mean: Complex64::new(1.0, 0.0),
            stderr: 0.0,
            n_samples: 0,
            seed,
        });
    }
    let p = beta2 / (4.0 * PI);
    let sampler = MinkPairSampler::new(g.clone(), p)?;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let comb = sign / (factorial(m) * factorial(m));
    let est = mc_run(mc.n_base, seed, |_, rng| {
        let (xs, ys, wgt) = sampler.sample_pairs(m, rng);
        let log = mink_detratio_log(&xs, &ys, p, mu, eps)
            + Complex64::new(-0.5 * beta2 * w.difference_quadratic_form(&xs, &ys), 0.0);
        log.exp() * product_g(g, &xs, &ys) * wgt
    })?;
    Ok(McEstimate {
        mean: est.mean * comb,
        stderr: est.stderr * comb.abs(),
        n_samples: est.n_samples,
        seed,
    })
}

/// Order-`m` Minkowski composite-operator numerator term at UV cutoff `ε`.
pub fn mink_numerator_term_o(
    m: usize,
    f: &SmearingFunction,
    g: &PlateauCutoff,
    reg: &RegulatorParams,
    w: &StatePartW,
    with_counterterm: bool,
    mc: &McBudget,
) -> Result<McEstimate<Tensor2<Complex64>>> {
    let seed = mc.term_seed(5, m);
    if m == 0 {
        // Only the W-coincidence term survives: ∫f · lim ∂∂W.
        let (uu, uv, vv) = w.coincident_second_derivative_lightcone();
        let fmass = crate::integrate::cubature::polar_cubature(
            &mut |z: Vec2| f.value(z),
            f.centroid(),
            f.support_radius(1e-16),
            &[],
            1e-10,
            1e-300,
        )?
        .0;
        return Ok(McEstimate {
            mean: Tensor2 {
                c: [
                    [
                        Complex64::new(uu * fmass, 0.0),
                        Complex64::new(uv * fmass, 0.0),
                    ],
                    [
                        Complex64::new(uv * fmass, 0.0),
                        Complex64::new(vv * fmass, 0.0),
                    ],
                ],
            },
            stderr: 0.0,
            n_samples: 0,
            seed,
        });
    }
    let p = reg.p();
    let beta2 = reg.beta2;
    let sampler = MinkPairSampler::new(g.clone(), p)?;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let comb = sign / (factorial(m) * factorial(m));
    let tol = mc.quad_tol;
    let est = mc_run(mc.n_for_o_term(m), seed, |_, rng| {
        let (xs, ys, wgt) = sampler.sample_pairs(m, rng);
        let pts: Vec<Vec2> = xs.iter().chain(&ys).copied().collect();
        let cfg = ChargeConfiguration {
            points: pts,
            charges: charges_for(m),
        };
        let bracket =
            crate::correlators::mink_bracket_smeared(f, &cfg, reg, w, with_counterterm, tol)
                .unwrap_or_else(|_| Tensor2 {
                    c: [[Complex64::new(f64::NAN, 0.0); 2]; 2],
                });
        let log = mink_detratio_log(&xs, &ys, p, reg.mu, reg.eps)
            + Complex64::new(-0.5 * beta2 * w.difference_quadratic_form(&xs, &ys), 0.0);
        bracket.scale_c(log.exp() * product_g(g, &xs, &ys) * wgt)
    })?;
    Ok(McEstimate {
        mean: est.mean.scale(comb),
        stderr: est.stderr * comb.abs(),
        n_samples: est.n_samples,
        seed,
    })
}

/// Order-`m` Minkowski vertex numerator term: `i (-1)^m / (m!(m+1)!)` times
/// the `(m+1)`-pair integral with the extra insertion smeared by `g·f`.
pub fn mink_numerator_term_vertex(
    m: usize,
    f: &SmearingFunction,
    g: &PlateauCutoff,
    reg: &RegulatorParams,
    w: &StatePartW,
    charge: crate::correlators::VertexCharge,
    mc: &McBudget,
) -> Result<McEstimate<Complex64>> {
    let seed = mc.term_seed(6, m);
    let p = reg.p();
    let beta2 = reg.beta2;
    let sampler = MinkPairSampler::new(g.clone(), p)?;
    let pairs = m + 1;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let pref = Complex64::new(0.0, sign) / (factorial(m) * factorial(m + 1)) * pairs as f64;
    let plus = charge == crate::correlators::VertexCharge::Plus;
    let est = mc_run(mc.n_base, seed, |_, rng| {
        let (xs, ys, wgt) = sampler.sample_pairs(pairs, rng);
        let smear_pts = if plus { &xs } else { &ys };
        let favg: f64 = smear_pts.iter().map(|&x| f.value(x)).sum::<f64>() / pairs as f64;
        let log = mink_detratio_log(&xs, &ys, p, reg.mu, reg.eps)
            + Complex64::new(-0.5 * beta2 * w.difference_quadratic_form(&xs, &ys), 0.0);
        log.exp() * product_g(g, &xs, &ys) * favg * wgt
    })?;
    Ok(McEstimate {
        mean: est.mean * pref,
        stderr: est.stderr * pref.norm(),
        n_samples: est.n_samples,
        seed,
    })
}

/// Assembled Minkowski quotient at one `ε`, plus the ladder extrapolation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GlowValueMink {
    /// Extrapolated `ε → 0` value (componentwise ladder fit `a + b ln ε + c ε`).
    pub value: Tensor2<Complex64>,
    pub stderr: f64,
    /// Quotients at each ladder point.
    pub at_eps: Vec<(f64, Tensor2<Complex64>, f64)>,
    /// True when the ladder fit residual exceeds the per-point errors, i.e.
    /// the extrapolation is not trustworthy at this budget.
    pub flagged: bool,
    pub terms: Vec<SeriesTerm>,
}

/// Assembles the truncated Minkowski Gell-Mann-Low quotient on an `ε`
/// ladder and extrapolates to `ε → 0` with the `a + b ln ε + c ε` model.
#[allow(clippy::too_many_arguments)]
pub fn glow_value_mink(
    op: OperatorKind,
    f: &SmearingFunction,
    g: &PlateauCutoff,
    beta2: f64,
    mu: f64,
    w: &StatePartW,
    n_max: usize,
    eps_ladder: &[f64],
    mc: &McBudget,
) -> Result<GlowValueMink> {
    if eps_ladder.len() < 3 {
        return Err(Error::domain("minkowski assembly needs an eps ladder (>= 3)"));
    }
    let mut terms = vec![];
    let mut at_eps: Vec<(f64, Tensor2<Complex64>, f64)> = vec![];
    for &eps in eps_ladder {
        let reg = RegulatorParams::new(0.0, eps, mu, beta2)?;
        let mut denom = Complex64::new(0.0, 0.0);
        let mut denom_var = 0.0;
        for m in 0..=n_max {
            let t = mink_denominator_term(m, g, beta2, mu, eps, w, mc)?;
            denom += t.mean;
            denom_var += t.stderr * t.stderr;
            terms.push(SeriesTerm::complex(
                "minkowski",
                "denominator",
                m,
                Some(eps),
                &t,
            ));
        }
        let mut num: Tensor2<Complex64> = Tensor2::zero();
        let mut num_var = 0.0;
        for m in 0..=n_max {
            let t = mink_numerator_term_o(m, f, g, &reg, w, true, mc)?;
            let contribution = match op {
                OperatorKind::OTensor => t.mean,
                OperatorKind::TTensor { .. } => t.mean.traceless_mink(),
            };
            num = num.add_t(contribution);
            num_var += t.stderr * t.stderr;
            terms.push(SeriesTerm::tensor_c(
                "minkowski",
                "numerator-O",
                m,
                Some(eps),
                &t,
            ));
        }
        if let OperatorKind::TTensor { quantum_corrected } = op {
            let coupling = if quantum_corrected {
                1.0 - beta2 / (8.0 * PI)
            } else {
                1.0
            };
            for m in 0..=n_max {
                for charge in [
                    crate::correlators::VertexCharge::Plus,
                    crate::correlators::VertexCharge::Minus,
                ] {
                    let t = mink_numerator_term_vertex(m, f, g, &reg, w, charge, mc)?;
                    // η_μν (V+V) in light cone components: η_uv = -1/2.
                    let add = t.mean * coupling * (-0.5);
                    num.c[0][1] += add;
                    num.c[1][0] += add;
                    num_var += coupling * coupling * t.stderr * t.stderr;
                    terms.push(SeriesTerm::complex(
                        "minkowski",
                        "numerator-vertex",
                        m,
                        Some(eps),
                        &t,
                    ));
                }
            }
        }
        if denom.norm() < 0.5 {
            return Err(Error::Series(format!(
                "denominator estimate |{denom}| < 0.5 at eps={eps}"
            )));
        }
        let q = num.scale_c(Complex64::new(1.0, 0.0) / denom);
        let stderr =
            num_var.sqrt() / denom.norm() + q.max_abs() / denom.norm() * denom_var.sqrt();
        at_eps.push((eps, q, stderr));
    }
    // Componentwise ladder extrapolation.
    let mut value = Tensor2::zero();
    let mut flagged = false;
    let mut worst_fit = 0.0f64;
    for mi in 0..2 {
        for ni in 0..2 {
            let ys: Vec<Complex64> = at_eps.iter().map(|(_, q, _)| q.c[mi][ni]).collect();
            let (a, _, _) = crate::verify::fit_log_ladder_complex(eps_ladder, &ys);
            value.c[mi][ni] = a;
            let re: Vec<f64> = ys.iter().map(|z| z.re).collect();
            let im: Vec<f64> = ys.iter().map(|z| z.im).collect();
            let (_, _, _, rep_re) = crate::verify::fit_log_ladder(eps_ladder, &re);
            let (_, _, _, rep_im) = crate::verify::fit_log_ladder(eps_ladder, &im);
            worst_fit = worst_fit.max(rep_re.residual_rms).max(rep_im.residual_rms);
        }
    }
    let per_point_err = at_eps.iter().map(|&(_, _, s)| s).fold(0.0f64, f64::max);
    let stderr_extrap = crate::verify::extrapolation_stderr(
        eps_ladder,
        &at_eps.iter().map(|&(_, _, s)| s).collect::<Vec<_>>(),
    );
    if worst_fit > 3.0 * per_point_err.max(1e-12) {
        flagged = true;
    }
    Ok(GlowValueMink {
        value,
        stderr: stderr_extrap + worst_fit,
        at_eps,
        flagged,
        terms,
    })
}

// ---------------------------------------------------------------------------
// Conservation residuals
// ---------------------------------------------------------------------------

/// One order (in insertion pairs) of the Euclidean conservation estimators,
/// all from shared samples: the residual of the quantum-corrected tensor,
/// the residual of the classical tensor, and the vertex-term reference
/// series entering the ratio test.
#[derive(Clone, Debug)]
pub struct ConsTermEuclid {
    pub corrected: McEstimate<[f64; 2]>,
    pub uncorrected: McEstimate<[f64; 2]>,
    pub vertex_ref: McEstimate<[f64; 2]>,
}

/// The closed-form conservation integrand: the `∂^μ f`-smeared, traceless
/// composite part reduces exactly (the smeared kernels collapse through the
/// fundamental-solution identity) to
/// `(β²/8π) Σ_i [∂f(x_i) + ∂f(y_i)] + (β²/4π) B_ν`, with
/// `B_ν = Σ_{j<k}[f(x_j)-f(x_k)] ∂_ν ln μ²(x_j-x_k)² - Σ_{j,k}[...] + ...`,
/// while the vertex part contributes `c_T Σ_i [∂f(x_i) + ∂f(y_i)]` from the
/// next order. The estimators differ only in `c_T`.
pub fn conservation_term_euclid(
    k: usize,
    f: &SmearingFunction,
    g: &PlateauCutoff,
    beta2: f64,
    mu: f64,
    mc: &McBudget,
) -> Result<ConsTermEuclid> {
    if k == 0 {
        return Err(Error::domain("conservation order counts pairs, k >= 1"));
    }
    let p = beta2 / (4.0 * PI);
    let sampler = PairSampler::new(g.clone(), p)?;
    let comb = 1.0 / (factorial(k) * factorial(k));
    let seed = mc.term_seed(7, k);
    let c_corr = 1.0 - beta2 / (8.0 * PI);
    let est: McEstimate<[f64; 6]> = mc_run(mc.n_base, seed, |_, rng| {
        let (xs, ys, wgt) = sampler.sample_pairs(k, rng);
        let base = euclid_detratio_log(&xs, &ys, p, mu).exp() * product_g(g, &xs, &ys) * wgt;
        // S1_ν = Σ_i ∂_ν f(x_i) + ∂_ν f(y_i).
        let mut s1 = [0.0f64; 2];
        for &x in xs.iter().chain(&ys) {
            let grad = f.jet(x).grad;
            s1[0] += grad.0;
            s1[1] += grad.1;
        }
        // B_ν: pairwise differences against ∂ ln μ²(a-b)² = 2(a-b)_ν/(a-b)².
        let mut b = [0.0f64; 2];
        let mut add_pair = |a: Vec2, bb: Vec2, sign: f64| {
            let d = a - bb;
            let r2 = d.norm2();
            let fac = sign * (f.value(a) - f.value(bb)) * 2.0 / r2;
            b[0] += fac * d.0;
            b[1] += fac * d.1;
        };
        for j in 0..k {
            for l in (j + 1)..k {
                add_pair(xs[j], xs[l], 1.0);
                add_pair(ys[j], ys[l], 1.0);
            }
        }
        for j in 0..k {
            for l in 0..k {
                add_pair(xs[j], ys[l], -1.0);
            }
        }
        let o_part = |nu: usize| (beta2 / (8.0 * PI)) * s1[nu] + (beta2 / (4.0 * PI)) * b[nu];
        [
            base * (o_part(0) + c_corr * s1[0]),
            base * (o_part(1) + c_corr * s1[1]),
            base * (o_part(0) + 1.0 * s1[0]),
            base * (o_part(1) + 1.0 * s1[1]),
            base * s1[0],
            base * s1[1],
        ]
    })?;
    let split = |lo: usize| -> McEstimate<[f64; 2]> {
        McEstimate {
            mean: [est.mean[lo] * comb, est.mean[lo + 1] * comb],
            // The componentwise errors are not separated by mc_run; scale the
            // combined one, which is conservative for each pair.
            stderr: est.stderr * comb,
            n_samples: est.n_samples,
            seed,
        }
    };
    Ok(ConsTermEuclid {
        corrected: split(0),
        uncorrected: split(2),
        vertex_ref: split(4),
    })
}

/// Summed Euclidean conservation residual over pair orders `1..=n_max`.
/// Returns `(residual, vertex_reference)`, each with propagated errors.
pub fn conservation_residual_euclid(
    f: &SmearingFunction,
    g: &PlateauCutoff,
    beta2: f64,
    mu: f64,
    n_max: usize,
    corrected: bool,
    mc: &McBudget,
) -> Result<(McEstimate<[f64; 2]>, McEstimate<[f64; 2]>)> {
    if !crate::smearing::constant_on_support(g, f, 1e-12) {
        return Err(Error::domain(
            "conservation hypothesis violated: g is not constant on the support of f",
        ));
    }
    let mut resid = [0.0f64; 2];
    let mut resid_var = 0.0;
    let mut vref = [0.0f64; 2];
    let mut vref_var = 0.0;
    for k in 1..=n_max.max(1) {
        let t = conservation_term_euclid(k, f, g, beta2, mu, mc)?;
        let r = if corrected { &t.corrected } else { &t.uncorrected };
        resid[0] += r.mean[0];
        resid[1] += r.mean[1];
        resid_var += r.stderr * r.stderr;
        vref[0] += t.vertex_ref.mean[0];
        vref[1] += t.vertex_ref.mean[1];
        vref_var += t.vertex_ref.stderr * t.vertex_ref.stderr;
    }
    Ok((
        McEstimate {
            mean: resid,
            stderr: resid_var.sqrt(),
            n_samples: mc.n_base,
            seed: mc.seed,
        },
        McEstimate {
            mean: vref,
            stderr: vref_var.sqrt(),
            n_samples: mc.n_base,
            seed: mc.seed,
        },
    ))
}

/// The `∂^μ f`-smeared traceless bracket of the Minkowski conservation
/// integrand, per configuration: only the `uu` and `vv` bracket components
/// survive the traceless contraction, paired with light cone derivatives of
/// `f`:
/// `S_u = -2 ∫ ∂_v f(z) bracket_uu(z) d²z`,
/// `S_v = -2 ∫ ∂_u f(z) bracket_vv(z) d²z`.
fn mink_cons_bracket_smeared(
    f: &SmearingFunction,
    cfg: &ChargeConfiguration,
    beta2: f64,
    eps: f64,
    w: &StatePartW,
    rel_tol: f64,
) -> Result<[Complex64; 2]> {
    let c_f = f.centroid();
    let span = std::f64::consts::SQRT_2 * f.support_radius(1e-16) + 1e-9;
    let (uc, vc) = (c_f.0 - c_f.1, c_f.0 + c_f.1);
    let us: Vec<f64> = cfg.points.iter().map(|&x| x.0 - x.1).collect();
    let vs: Vec<f64> = cfg.points.iter().map(|&x| x.0 + x.1).collect();
    let sum_uv: Vec<f64> = us.iter().zip(&vs).map(|(u, v)| u + v).collect();
    let mut integrand = |a: f64, b: f64| -> [Complex64; 2] {
        let z = Vec2(0.5 * (a + b), 0.5 * (b - a));
        let jet = f.jet(z);
        let bracket = crate::correlators::mink_o_bracket(z, cfg, beta2, eps, w);
        [
            bracket.c[0][0] * (-2.0 * jet.d_v()),
            bracket.c[1][1] * (-2.0 * jet.d_u()),
        ]
    };
    let (v, _) = iterated_uv(
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
    Ok([v[0] * 0.5, v[1] * 0.5]) // d²z = (1/2) du dv
}

/// One order of the Minkowski conservation estimators at one `ε`, shared
/// samples: residuals with the redefinition (and quantum-corrected coupling)
/// on and off, plus the vertex reference.
pub struct ConsTermMink {
    pub redefined: McEstimate<[Complex64; 2]>,
    pub plain: McEstimate<[Complex64; 2]>,
    pub vertex_ref: McEstimate<[Complex64; 2]>,
}

#[allow(clippy::too_many_arguments)]
pub fn conservation_term_mink(
    k: usize,
    f: &SmearingFunction,
    g: &PlateauCutoff,
    beta2: f64,
    mu: f64,
    eps: f64,
    w: &StatePartW,
    mc: &McBudget,
) -> Result<ConsTermMink> {
    if k == 0 {
        return Err(Error::domain("conservation order counts pairs, k >= 1"));
    }
    let p = beta2 / (4.0 * PI);
    let sampler = MinkPairSampler::new(g.clone(), p)?;
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let comb = sign / (factorial(k) * factorial(k));
    let seed = mc.term_seed(8, k).wrapping_add((eps * 1e9) as u64);
    let c_corr = 1.0 - beta2 / (8.0 * PI);
    let redef = cons_redef_c(beta2);
    let tol = mc.quad_tol;
    let est: McEstimate<[Complex64; 6]> = mc_run(mc.n_base, seed, |_, rng| {
        let (xs, ys, wgt) = sampler.sample_pairs(k, rng);
        let pts: Vec<Vec2> = xs.iter().chain(&ys).copied().collect();
        let cfg = ChargeConfiguration {
            points: pts.clone(),
            charges: charges_for(k),
        };
        let base = (mink_detratio_log(&xs, &ys, p, mu, eps)
            + Complex64::new(-0.5 * beta2 * w.difference_quadratic_form(&xs, &ys), 0.0))
        .exp()
            * product_g(g, &xs, &ys)
            * wgt;
        let s = mink_cons_bracket_smeared(f, &cfg, beta2, eps, w, tol)
            .unwrap_or([Complex64::new(f64::NAN, 0.0); 2]);
        // Vertex part: -i c_T Σ_i [∂_ν f] in light cone components.
        let mut s1 = [0.0f64; 2];
        for &x in &pts {
            let jet = f.jet(x);
            s1[0] += jet.d_u();
            s1[1] += jet.d_v();
        }
        // Redefinition: Σ_j [-2 c^u ∂_v f(x_j), -2 c^v ∂_u f(x_j)].
        let mut rd = [Complex64::new(0.0, 0.0); 2];
        for &x in &pts {
            let jet = f.jet(x);
            rd[0] += redef * (-2.0 * jet.d_v());
            rd[1] += redef * (-2.0 * jet.d_u());
        }
        let mi = Complex64::new(0.0, -1.0);
        [
            base * (s[0] + rd[0] + mi * (c_corr * s1[0])),
            base * (s[1] + rd[1] + mi * (c_corr * s1[1])),
            base * (s[0] + mi * s1[0]),
            base * (s[1] + mi * s1[1]),
            base * mi * s1[0],
            base * mi * s1[1],
        ]
    })?;
    let split = |lo: usize| -> McEstimate<[Complex64; 2]> {
        McEstimate {
            mean: [est.mean[lo] * comb, est.mean[lo + 1] * comb],
            stderr: est.stderr * comb.abs(),
            n_samples: est.n_samples,
            seed,
        }
    };
    Ok(ConsTermMink {
        redefined: split(0),
        plain: split(2),
        vertex_ref: split(4),
    })
}

/// Minkowski conservation residual: sums pair orders `1..=n_max` at each
/// ladder `ε`, then extrapolates componentwise. Returns the extrapolated
/// residual, its propagated error, and the extrapolated vertex reference.
#[allow(clippy::too_many_arguments)]
pub fn conservation_residual_mink(
    f: &SmearingFunction,
    g: &PlateauCutoff,
    beta2: f64,
    mu: f64,
    w: &StatePartW,
    n_max: usize,
    eps_ladder: &[f64],
    redefined: bool,
    mc: &McBudget,
) -> Result<(McEstimate<[Complex64; 2]>, [Complex64; 2])> {
    if !crate::smearing::constant_on_support(g, f, 1e-12) {
        return Err(Error::domain(
            "conservation hypothesis violated: g is not constant on the support of f",
        ));
    }
    if eps_ladder.len() < 3 {
        return Err(Error::domain("need an eps ladder with >= 3 points"));
    }
    let mut per_eps: Vec<[Complex64; 2]> = vec![];
    let mut per_eps_err: Vec<f64> = vec![];
    let mut vrefs: Vec<[Complex64; 2]> = vec![];
    for &eps in eps_ladder {
        let mut r = [Complex64::new(0.0, 0.0); 2];
        let mut var = 0.0;
        let mut v = [Complex64::new(0.0, 0.0); 2];
        for k in 1..=n_max.max(1) {
            let t = conservation_term_mink(k, f, g, beta2, mu, eps, w, mc)?;
            let sel = if redefined { &t.redefined } else { &t.plain };
            r[0] += sel.mean[0];
            r[1] += sel.mean[1];
            var += sel.stderr * sel.stderr;
            v[0] += t.vertex_ref.mean[0];
            v[1] += t.vertex_ref.mean[1];
        }
        per_eps.push(r);
        per_eps_err.push(var.sqrt());
        vrefs.push(v);
    }
    let mut mean = [Complex64::new(0.0, 0.0); 2];
    let mut vref = [Complex64::new(0.0, 0.0); 2];
    for nu in 0..2 {
        let ys: Vec<Complex64> = per_eps.iter().map(|r| r[nu]).collect();
        mean[nu] = crate::verify::fit_log_ladder_complex(eps_ladder, &ys).0;
        let vys: Vec<Complex64> = vrefs.iter().map(|r| r[nu]).collect();
        vref[nu] = crate::verify::fit_log_ladder_complex(eps_ladder, &vys).0;
    }
    let stderr = crate::verify::extrapolation_stderr(eps_ladder, &per_eps_err);
    Ok((
        McEstimate {
            mean,
            stderr,
            n_samples: mc.n_base,
            seed: mc.seed,
        },
        vref,
    ))
}
