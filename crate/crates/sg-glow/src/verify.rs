//! Executable identity checks.
//!
//! The determinant identities, inequality constants, scaling-exponent fits
//! and conservation residuals that the rest of the crate relies on, each as
//! a runnable check producing a report.

use crate::correlators::ChargeConfiguration;
use crate::covariance::RegulatorParams;
use crate::error::{Error, Result};
use crate::integrate::quad::adaptive_1d;
use crate::integrate::rng::CounterRng;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Result of a least-squares ladder fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    /// Fitted coefficients, in the order of the model terms.
    pub coefficients: Vec<f64>,
    /// Root-mean-square residual, same units as the data.
    pub residual_rms: f64,
    /// The `(parameter, value)` points that entered the fit.
    pub points: Vec<(f64, f64)>,
}

/// Ordinary least squares for a small design matrix (normal equations with
/// Gaussian elimination; the ladders here have ≤ 8 points and ≤ 3 terms).
fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = design.len();
    let k = design[0].len();
    let mut ata = vec![vec![0.0; k]; k];
    let mut aty = vec![0.0; k];
    for i in 0..n {
        for a in 0..k {
            aty[a] += design[i][a] * y[i];
            for b in 0..k {
                ata[a][b] += design[i][a] * design[i][b];
            }
        }
    }
    // Solve ata x = aty.
    for col in 0..k {
        let mut piv = col;
        for r in (col + 1)..k {
            if ata[r][col].abs() > ata[piv][col].abs() {
                piv = r;
            }
        }
        ata.swap(col, piv);
        aty.swap(col, piv);
        let d = ata[col][col];
        for r in 0..k {
            if r == col {
                continue;
            }
            let fac = ata[r][col] / d;
            for c in col..k {
                ata[r][c] -= fac * ata[col][c];
            }
            aty[r] -= fac * aty[col];
        }
    }
    (0..k).map(|i| aty[i] / ata[i][i]).collect()
}

/// Fit `y = a + b ln ε + c ε` over an `ε` ladder; returns `(a, b, c)` and
/// the report. This is the extrapolation scheme used everywhere a UV-cutoff
/// ladder is removed: `a` is the `ε → 0` value, `b` the divergence
/// coefficient.
pub fn fit_log_ladder(eps: &[f64], values: &[f64]) -> (f64, f64, f64, FitReport) {
    assert!(eps.len() >= 3, "log-ladder fit needs at least 3 points");
    let design: Vec<Vec<f64>> = eps.iter().map(|&e| vec![1.0, e.ln(), e]).collect();
    let coef = least_squares(&design, values);
    let mut rss = 0.0;
    for (i, &e) in eps.iter().enumerate() {
        let model = coef[0] + coef[1] * e.ln() + coef[2] * e;
        rss += (values[i] - model) * (values[i] - model);
    }
    let report = FitReport {
        coefficients: coef.clone(),
        residual_rms: (rss / eps.len() as f64).sqrt(),
        points: eps.iter().copied().zip(values.iter().copied()).collect(),
    };
    (coef[0], coef[1], coef[2], report)
}

/// Complex variant of [`fit_log_ladder`]: fits real and imaginary parts
/// separately on shared abscissae.
pub fn fit_log_ladder_complex(
    eps: &[f64],
    values: &[Complex64],
) -> (Complex64, Complex64, Complex64) {
    let re: Vec<f64> = values.iter().map(|v| v.re).collect();
    let im: Vec<f64> = values.iter().map(|v| v.im).collect();
    let (ar, br, cr, _) = fit_log_ladder(eps, &re);
    let (ai, bi, ci, _) = fit_log_ladder(eps, &im);
    (
        Complex64::new(ar, ai),
        Complex64::new(br, bi),
        Complex64::new(cr, ci),
    )
}

/// Straight-line fit `y = a + b x`; returns `(a, b)` and the RMS residual.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let design: Vec<Vec<f64>> = x.iter().map(|&v| vec![1.0, v]).collect();
    let coef = least_squares(&design, y);
    let mut rss = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let m = coef[0] + coef[1] * v;
        rss += (y[i] - m) * (y[i] - m);
    }
    (coef[0], coef[1], (rss / x.len() as f64).sqrt())
}

/// Complex determinant by Gaussian elimination with partial pivoting.
pub fn determinant_lu(mat: &[Complex64], n: usize) -> Complex64 {
    let mut a = mat.to_vec();
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r * n + col].norm() > a[piv * n + col].norm() {
                piv = r;
            }
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            det = -det;
        }
        let d = a[col * n + col];
        if d.norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        det *= d;
        for r in (col + 1)..n {
            let fac = a[r * n + col] / d;
            for c in col..n {
                let sub = fac * a[col * n + c];
                a[r * n + c] -= sub;
            }
        }
    }
    det
}

/// Cauchy product formula
/// `det(1/(χ_i - υ_j)) = Π_{i<j}(χ_j-χ_i)(υ_i-υ_j) / Π_{i,j}(χ_i-υ_j)`.
pub fn cauchy_determinant_product(chi: &[Complex64], ups: &[Complex64]) -> Complex64 {
    let n = chi.len();
    let mut log_num = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            log_num += (chi[j] - chi[i]).ln() + (ups[i] - ups[j]).ln();
        }
    }
    let mut log_den = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            log_den += (chi[i] - ups[j]).ln();
        }
    }
    (log_num - log_den).exp()
}

fn random_separated_points(
    n: usize,
    min_dist: f64,
    scale: f64,
    rng: &mut CounterRng,
) -> (Vec<Complex64>, Vec<Complex64>) {
    loop {
        let all: Vec<Complex64> = (0..2 * n)
            .map(|_| {
                Complex64::new(
                    scale * (2.0 * rng.uniform() - 1.0),
                    scale * (2.0 * rng.uniform() - 1.0),
                )
            })
            .collect();
        let mut ok = true;
        for i in 0..2 * n {
            for j in (i + 1)..2 * n {
                if (all[i] - all[j]).norm() < min_dist {
                    ok = false;
                }
            }
        }
        if ok {
            return (all[..n].to_vec(), all[n..].to_vec());
        }
    }
}

/// Compares the Cauchy determinant computed by LU elimination against the
/// product formula on random well-separated complex configurations; returns
/// the maximum relative error over `trials`.
pub fn check_cauchy_determinant(n: usize, trials: usize, seed: u64) -> Result<f64> {
    if !(1..=8).contains(&n) {
        return Err(Error::domain("cauchy check needs 1 <= n <= 8"));
    }
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut rng = CounterRng::for_sample(seed, t as u64);
        let (chi, ups) = random_separated_points(n, 0.1, 2.0, &mut rng);
        let mut mat = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                mat[i * n + j] = Complex64::new(1.0, 0.0) / (chi[i] - ups[j]);
            }
        }
        let lu = determinant_lu(&mat, n);
        let product = cauchy_determinant_product(&chi, &ups);
        let rel = (lu - product).norm() / product.norm();
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Verifies the permutation bound
/// `[Π(x_i-x_j)²(y_i-y_j)² / Π(x_i-y_j)²]^p
///   ≤ (n!)^{max(2p-1,0)} Σ_π Π_j |x_j - y_π(j)|^{-2p}`
/// on random configurations via the explicit permanent. Returns the number
/// of violations (zero is the theorem).
pub fn check_determinant_bound(n: usize, p: f64, trials: usize, seed: u64) -> Result<usize> {
    if n > 6 {
        return Err(Error::domain("permanent cost grows as n!; need n <= 6"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain("need 0 < p < 1"));
    }
    let mut violations = 0;
    for t in 0..trials {
        let mut rng = CounterRng::for_sample(seed, t as u64);
        let xs: Vec<crate::geom::Vec2> = (0..n)
            .map(|_| {
                crate::geom::Vec2(4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0)
            })
            .collect();
        let ys: Vec<crate::geom::Vec2> = (0..n)
            .map(|_| {
                crate::geom::Vec2(4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0)
            })
            .collect();
        // Left side in log space.
        let mut log_lhs = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                log_lhs += (xs[i] - xs[j]).norm2().ln() + (ys[i] - ys[j]).norm2().ln();
            }
        }
        for i in 0..n {
            for j in 0..n {
                log_lhs -= (xs[i] - ys[j]).norm2().ln();
            }
        }
        let lhs = (p * log_lhs).exp();
        // Permanent of |x_j - y_k|^{-2p}.
        let mut perm_sum = 0.0;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let mut prod = 1.0;
            for (j, &k) in idx.iter().enumerate() {
                prod *= (xs[j] - ys[k]).norm2().powf(-p);
            }
            perm_sum += prod;
            if !next_permutation(&mut idx) {
                break;
            }
        }
        let fact: f64 = (2..=n).map(|k| k as f64).product();
        let rhs = fact.powf((2.0 * p - 1.0).max(0.0)) * perm_sum;
        if lhs > rhs * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    Ok(violations)
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

/// Exponents of the three-function inequality used in the convergence
/// bounds: `q = 1 + (4π-β²)/(8π)`, `p = r = 1 + 4π/(8π-β²)`, which satisfy
/// `1/p + 1/q + 1/r = 2` in the finite regime.
pub fn young_exponents(beta2: f64) -> Result<(f64, f64, f64)> {
    if !(beta2 > 0.0 && beta2 < 4.0 * PI) {
        return Err(Error::domain("need 0 < beta2 < 4*pi"));
    }
    let q = 1.0 + (4.0 * PI - beta2) / (8.0 * PI);
    let p = 1.0 + 4.0 * PI / (8.0 * PI - beta2);
    Ok((p, q, p))
}

/// Closed form of `‖Θ(1-μ|x|)(μ|x|)^{-β²/2π}‖_q^q
///   = 32π³ / [(4π-β²)(8π-β²)] μ^{-2}`.
pub fn theta_norm_q(beta2: f64, mu: f64) -> Result<f64> {
    if !(beta2 > 0.0 && beta2 < 4.0 * PI) {
        return Err(Error::domain("need 0 < beta2 < 4*pi"));
    }
    Ok(32.0 * PI.powi(3) / ((4.0 * PI - beta2) * (8.0 * PI - beta2)) / (mu * mu))
}

/// Radial quadrature of `∫_{μ|x|≤1} (μ|x|)^{-β² q / 2π} d²x`, the integral
/// behind [`theta_norm_q`]; the check that it reproduces the closed form is
/// an acceptance criterion.
pub fn theta_norm_q_quadrature(beta2: f64, mu: f64) -> Result<f64> {
    let (_, q, _) = young_exponents(beta2)?;
    let expo = -beta2 * q / (2.0 * PI);
    let (v, _) = adaptive_1d(
        &mut |r: f64| 2.0 * PI * r * (mu * r).powf(expo),
        0.0,
        1.0 / mu,
        &[],
        1e-10,
        1e-14,
        6000,
    )?;
    Ok(v)
}

/// Fits the infrared-cutoff exponent of the regulated vertex correlator:
/// `ln ⟨∏ V⟩ ~ (β²/4π)(Σσ)² ln Λ`. Expects a ladder of at least 4 points
/// spanning two decades.
pub fn fit_neutrality_exponent(
    cfg: &ChargeConfiguration,
    reg: &RegulatorParams,
    lambda_ladder: &[f64],
) -> Result<FitReport> {
    if lambda_ladder.len() < 4 {
        return Err(Error::domain("need at least 4 ladder points"));
    }
    let (max, min) = lambda_ladder
        .iter()
        .fold((f64::MIN, f64::MAX), |(hi, lo), &l| (hi.max(l), lo.min(l)));
    if max / min < 99.0 {
        return Err(Error::domain("ladder must span at least two decades"));
    }
    let mut xs = vec![];
    let mut ys = vec![];
    for &lambda in lambda_ladder {
        let r = RegulatorParams::new(lambda, reg.eps, reg.mu, reg.beta2)?;
        let v = crate::correlators::euclid_vertex_corr(cfg, &r, false)?;
        if v.value <= 0.0 {
            return Err(Error::domain("zero correlator on the ladder"));
        }
        xs.push(lambda.ln());
        ys.push(v.value.ln());
    }
    let (_, slope, rms) = fit_line(&xs, &ys);
    Ok(FitReport {
        coefficients: vec![slope],
        residual_rms: rms,
        points: xs.into_iter().zip(ys).collect(),
    })
}

/// Euclidean log-divergence fit: slope of the diagonal `u_reg` components
/// versus `ln ε` equals `-π f(0)`.
pub fn fit_log_divergence_euclid(
    f: &crate::smearing::SmearingFunction,
    eps_ladder: &[f64],
) -> Result<FitReport> {
    if eps_ladder.len() < 4 {
        return Err(Error::domain("need at least 4 ladder points"));
    }
    let mut values = vec![];
    for &eps in eps_ladder {
        let t = crate::renorm::u_reg_smeared(f, eps, 1e-9)?;
        values.push(0.5 * t.trace());
    }
    let (_, b, _, report) = fit_log_ladder(eps_ladder, &values);
    let mut rep = report;
    rep.coefficients = vec![b];
    Ok(rep)
}

/// Minkowski log-divergence fit for an insertion configuration: the `uv`
/// component of the smeared composite correlator is fitted over the ladder
/// with and without the counterterm; returns `(slope_without, slope_with)`.
pub fn fit_log_divergence_mink(
    f: &crate::smearing::SmearingFunction,
    cfg: &ChargeConfiguration,
    reg: &RegulatorParams,
    w: &crate::covariance::StatePartW,
    eps_ladder: &[f64],
    rel_tol: f64,
) -> Result<(Complex64, Complex64)> {
    let mut with = vec![];
    let mut without = vec![];
    for &eps in eps_ladder {
        let r = RegulatorParams::new(reg.lambda, eps, reg.mu, reg.beta2)?;
        let t_on = crate::correlators::mink_o_corr_smeared(f, cfg, &r, w, true, rel_tol)?;
        let t_off = crate::correlators::mink_o_corr_smeared(f, cfg, &r, w, false, rel_tol)?;
        with.push(t_on.c[0][1]);
        without.push(t_off.c[0][1]);
    }
    let (_, b_off, _) = fit_log_ladder_complex(eps_ladder, &without);
    let (_, b_on, _) = fit_log_ladder_complex(eps_ladder, &with);
    Ok((b_off, b_on))
}

/// Propagates per-point standard errors through the `a + b ln ε + c ε` fit:
/// returns the standard error of the extrapolated value `a`.
pub fn extrapolation_stderr(eps: &[f64], stderrs: &[f64]) -> f64 {
    // a = Σ_i w_i y_i with w = first row of (XᵀX)⁻¹Xᵀ.
    let k = 3;
    let n = eps.len();
    let design: Vec<Vec<f64>> = eps.iter().map(|&e| vec![1.0, e.ln(), e]).collect();
    // Solve for the weight vector by fitting the unit responses.
    let mut var = 0.0;
    for i in 0..n {
        let mut y = vec![0.0; n];
        y[i] = 1.0;
        let coef = least_squares(&design, &y);
        let w_i = coef[0];
        let _ = k;
        var += w_i * w_i * stderrs[i] * stderrs[i];
    }
    var.sqrt()
}
