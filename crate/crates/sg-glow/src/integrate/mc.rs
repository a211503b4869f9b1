//! Seeded Monte Carlo with deterministic parallel reduction.
//!
//! Sample `i` draws from its own counter-based stream, blocks of samples are
//! reduced with compensated summation, and block results are combined in
//! index order. Estimates are therefore bit-identical for 1, 4 or 8 workers.

use crate::error::{Error, Result};
use crate::integrate::quad::QuadValue;
use crate::integrate::rng::CounterRng;
use crate::integrate::sampler::Sampler;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const BLOCK: u64 = 4096;

/// Values the Monte Carlo engine can average: needs componentwise squares
/// for the variance and a component sum to collapse the variance tensor
/// into one standard error.
pub trait McValue: QuadValue + Send {
    fn comp_sq(self) -> Self;
    fn comp_sum(self) -> f64;
}

impl McValue for f64 {
    fn comp_sq(self) -> Self {
        self * self
    }
    fn comp_sum(self) -> f64 {
        self
    }
}

impl McValue for Complex64 {
    fn comp_sq(self) -> Self {
        Complex64::new(self.re * self.re, self.im * self.im)
    }
    fn comp_sum(self) -> f64 {
        self.re + self.im
    }
}

impl McValue for crate::geom::Tensor2<f64> {
    fn comp_sq(self) -> Self {
        crate::geom::Tensor2::from_fn(|m, n| self.c[m][n] * self.c[m][n])
    }
    fn comp_sum(self) -> f64 {
        self.c.iter().flatten().sum()
    }
}

impl McValue for crate::geom::Tensor2<Complex64> {
    fn comp_sq(self) -> Self {
        crate::geom::Tensor2::from_fn(|m, n| {
            Complex64::new(
                self.c[m][n].re * self.c[m][n].re,
                self.c[m][n].im * self.c[m][n].im,
            )
        })
    }
    fn comp_sum(self) -> f64 {
        self.c.iter().flatten().map(|z| z.re + z.im).sum()
    }
}

impl<const N: usize> McValue for [f64; N] {
    fn comp_sq(mut self) -> Self {
        for i in 0..N {
            self[i] *= self[i];
        }
        self
    }
    fn comp_sum(self) -> f64 {
        self.iter().sum()
    }
}

impl<const N: usize> McValue for [Complex64; N] {
    fn comp_sq(mut self) -> Self {
        for i in 0..N {
            self[i] = Complex64::new(self[i].re * self[i].re, self[i].im * self[i].im);
        }
        self
    }
    fn comp_sum(self) -> f64 {
        self.iter().map(|z| z.re + z.im).sum()
    }
}

/// Monte Carlo run parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct McConfig {
    pub n: u64,
    pub seed: u64,
}

/// Estimate with statistical error; reproducible from `(seed, n)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McEstimate<V> {
    pub mean: V,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
}

struct Kahan<V: QuadValue> {
    sum: V,
    carry: V,
}

impl<V: QuadValue> Kahan<V> {
    fn new() -> Self {
        Kahan {
            sum: V::zero(),
            carry: V::zero(),
        }
    }

    fn add(&mut self, v: V) {
        let y = v.sub(self.carry);
        let t = self.sum.add(y);
        self.carry = t.sub(self.sum).sub(y);
        self.sum = t;
    }
}

/// Core driver: averages `eval(i, rng_i)` over `i = 0..n`.
///
/// Aborts with a located diagnostic on the first non-finite sample.
pub fn mc_run<V: McValue>(
    n: u64,
    seed: u64,
    eval: impl Fn(u64, &mut CounterRng) -> V + Sync,
) -> Result<McEstimate<V>> {
    if n < 2 {
        return Err(Error::domain("monte carlo needs n >= 2 samples"));
    }
    let blocks = n.div_ceil(BLOCK);
    let partial: Vec<std::result::Result<(V, V), u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = ((b + 1) * BLOCK).min(n);
            let mut sum = Kahan::new();
            let mut sumsq = Kahan::new();
            for i in lo..hi {
                let mut rng = CounterRng::for_sample(seed, i);
                let v = eval(i, &mut rng);
                if !v.abs().is_finite() {
                    return Err(i);
                }
                sum.add(v);
                sumsq.add(v.comp_sq());
            }
            Ok((sum.sum, sumsq.sum))
        })
        .collect();

    let mut sum = Kahan::new();
    let mut sumsq = Kahan::new();
    for r in partial {
        match r {
            Ok((s, s2)) => {
                sum.add(s);
                sumsq.add(s2);
            }
            Err(i) => {
                return Err(Error::NonFinite {
                    location: format!("sample index {i} (seed {seed})"),
                    detail: "integrand produced a non-finite value".into(),
                })
            }
        }
    }
    let nf = n as f64;
    let mean = sum.sum.scale(1.0 / nf);
    let var = sumsq.sum.scale(1.0 / nf).sub(mean.comp_sq());
    let stderr = (var.comp_sum().max(0.0) / nf).sqrt();
    Ok(McEstimate {
        mean,
        stderr,
        n_samples: n,
        seed,
    })
}

/// Importance-sampled integral of a real integrand:
/// `∫ f ≈ (1/n) Σ f(x_i) w_i` with `w_i = 1/density(x_i)`.
pub fn mc_integrate(
    integrand: impl Fn(&[f64]) -> f64 + Sync,
    dim: usize,
    sampler: &dyn Sampler,
    n: u64,
    seed: u64,
) -> Result<McEstimate<f64>> {
    assert_eq!(dim, sampler.dim(), "integrand/sampler dimension mismatch");
    mc_run(n, seed, |_, rng| {
        let mut buf = [0.0f64; 16];
        let w = sampler.sample_into(rng, &mut buf[..dim]);
        integrand(&buf[..dim]) * w
    })
}

/// Complex variant; real and imaginary parts share samples and the standard
/// error is the norm of the componentwise errors.
pub fn mc_integrate_complex(
    integrand: impl Fn(&[f64]) -> Complex64 + Sync,
    dim: usize,
    sampler: &dyn Sampler,
    n: u64,
    seed: u64,
) -> Result<McEstimate<Complex64>> {
    assert_eq!(dim, sampler.dim(), "integrand/sampler dimension mismatch");
    mc_run(n, seed, |_, rng| {
        let mut buf = [0.0f64; 16];
        let w = sampler.sample_into(rng, &mut buf[..dim]);
        integrand(&buf[..dim]) * w
    })
}
