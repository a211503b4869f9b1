//! Closed-form test functions and adiabatic cutoffs.
//!
//! Test functions are Gaussian mixtures and cutoffs are smooth radial
//! plateaus, so every smeared formula has exact first and second derivatives
//! and analytically known decay. Nothing in the crate differentiates a kernel
//! numerically; all derivatives come from the jets here.

use crate::error::{Error, Result};
use crate::geom::{Tensor2, Vec2};
use serde::{Deserialize, Serialize};

/// Value, gradient and Hessian of a scalar function at a point.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec2,
    pub hess: Tensor2<f64>,
}

impl Jet {
    pub fn zero() -> Jet {
        Jet {
            value: 0.0,
            grad: Vec2::ZERO,
            hess: Tensor2::zero(),
        }
    }

    /// Light cone derivative `∂_u = (∂_t - ∂_x)/2` (component 0 is time).
    pub fn d_u(&self) -> f64 {
        0.5 * (self.grad.0 - self.grad.1)
    }

    /// Light cone derivative `∂_v = (∂_t + ∂_x)/2`.
    pub fn d_v(&self) -> f64 {
        0.5 * (self.grad.0 + self.grad.1)
    }

    pub fn d_uu(&self) -> f64 {
        0.25 * (self.hess.c[0][0] - 2.0 * self.hess.c[0][1] + self.hess.c[1][1])
    }

    pub fn d_vv(&self) -> f64 {
        0.25 * (self.hess.c[0][0] + 2.0 * self.hess.c[0][1] + self.hess.c[1][1])
    }

    pub fn d_uv(&self) -> f64 {
        0.25 * (self.hess.c[0][0] - self.hess.c[1][1])
    }
}

/// Anything with an exact jet and a known decay radius.
pub trait Smearing {
    fn jet(&self, x: Vec2) -> Jet;

    fn value(&self, x: Vec2) -> f64 {
        self.jet(x).value
    }

    /// Radius around [`Smearing::centroid`] outside which `|f| < delta`.
    fn support_radius(&self, delta: f64) -> f64;

    fn centroid(&self) -> Vec2;
}

/// One Gaussian term `A exp(-a |x - center|²)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GaussTerm {
    #[serde(rename = "A")]
    pub amplitude: f64,
    pub center: [f64; 2],
    #[serde(rename = "a")]
    pub inv_width: f64,
}

/// Schwartz test function realised as a finite Gaussian mixture.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmearingFunction {
    pub terms: Vec<GaussTerm>,
}

impl SmearingFunction {
    pub fn new(terms: Vec<GaussTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::domain("smearing function needs at least one term"));
        }
        for t in &terms {
            if !(t.inv_width > 0.0) {
                return Err(Error::domain("inverse widths must be positive"));
            }
        }
        Ok(SmearingFunction { terms })
    }

    /// Unit Gaussian `exp(-a |x - c|²)`.
    pub fn gaussian(amplitude: f64, center: Vec2, inv_width: f64) -> Self {
        SmearingFunction {
            terms: vec![GaussTerm {
                amplitude,
                center: [center.0, center.1],
                inv_width,
            }],
        }
    }
}

impl Smearing for SmearingFunction {
    fn jet(&self, x: Vec2) -> Jet {
        let mut value = 0.0;
        let mut grad = Vec2::ZERO;
        let mut hess = Tensor2::zero();
        for t in &self.terms {
            let d = x - Vec2(t.center[0], t.center[1]);
            let v = t.amplitude * (-t.inv_width * d.norm2()).exp();
            value += v;
            let a = t.inv_width;
            grad = grad + d.scale(-2.0 * a * v);
            hess = hess.add_t(Tensor2::from_fn(|m, n| {
                v * (4.0 * a * a * d.comp(m) * d.comp(n) - if m == n { 2.0 * a } else { 0.0 })
            }));
        }
        Jet { value, grad, hess }
    }

    /// Conservative per-term bound: term `i` falls below `delta/N` beyond
    /// `|c_i - centroid| + sqrt(ln(N |A_i| / delta)/a_i)`.
    fn support_radius(&self, delta: f64) -> f64 {
        let c = self.centroid();
        let n = self.terms.len() as f64;
        self.terms
            .iter()
            .map(|t| {
                let off = (Vec2(t.center[0], t.center[1]) - c).norm();
                let ratio = n * t.amplitude.abs() / delta;
                if ratio <= 1.0 {
                    0.0
                } else {
                    off + (ratio.ln() / t.inv_width).sqrt()
                }
            })
            .fold(0.0f64, f64::max)
    }

    fn centroid(&self) -> Vec2 {
        let mut c = Vec2::ZERO;
        let mut wsum = 0.0;
        for t in &self.terms {
            let w = t.amplitude.abs();
            c = c + Vec2(t.center[0], t.center[1]).scale(w);
            wsum += w;
        }
        if wsum > 0.0 {
            c.scale(1.0 / wsum)
        } else {
            Vec2::ZERO
        }
    }
}

/// Adiabatic cutoff: exactly `g0` inside radius `R`, exactly `0` beyond
/// `R + w`, and the standard smooth bump quotient
/// `s(r) = h((R+w-r)/w) / [h((R+w-r)/w) + h((r-R)/w)]`, `h(t) = exp(-1/t)`,
/// in between.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlateauCutoff {
    pub g0: f64,
    pub center: [f64; 2],
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "w")]
    pub width: f64,
}

impl PlateauCutoff {
    pub fn new(g0: f64, center: Vec2, radius: f64, width: f64) -> Result<Self> {
        if !(g0 >= 0.0) || !(radius > 0.0) || !(width > 0.0) {
            return Err(Error::domain(
                "plateau needs g0 >= 0, radius > 0, width > 0",
            ));
        }
        Ok(PlateauCutoff {
            g0,
            center: [center.0, center.1],
            radius,
            width,
        })
    }

    pub fn center_vec(&self) -> Vec2 {
        Vec2(self.center[0], self.center[1])
    }

    /// Outer edge of the support.
    pub fn outer_radius(&self) -> f64 {
        self.radius + self.width
    }

    /// Radial profile `s(r)` with first and second derivatives.
    fn profile(&self, r: f64) -> (f64, f64, f64) {
        let rr = self.radius;
        let w = self.width;
        if r <= rr {
            return (1.0, 0.0, 0.0);
        }
        if r >= rr + w {
            return (0.0, 0.0, 0.0);
        }
        let h = |t: f64| (-1.0 / t).exp();
        let dh = |t: f64| (-1.0 / t).exp() / (t * t);
        let d2h = |t: f64| (-1.0 / t).exp() * (1.0 / (t * t * t * t) - 2.0 / (t * t * t));
        let t1 = (rr + w - r) / w;
        let t2 = (r - rr) / w;
        let n = h(t1);
        let np = -dh(t1) / w;
        let npp = d2h(t1) / (w * w);
        let d = h(t1) + h(t2);
        let dp = np + dh(t2) / w;
        let dpp = npp + d2h(t2) / (w * w);
        let s = n / d;
        let sp = (np - s * dp) / d;
        let spp = (npp - s * dpp) / d - 2.0 * dp * sp / d;
        (s, sp, spp)
    }
}

impl Smearing for PlateauCutoff {
    fn jet(&self, x: Vec2) -> Jet {
        let d = x - self.center_vec();
        let r = d.norm();
        if r <= self.radius {
            return Jet {
                value: self.g0,
                grad: Vec2::ZERO,
                hess: Tensor2::zero(),
            };
        }
        let (s, sp, spp) = self.profile(r);
        let u = d.scale(1.0 / r);
        let grad = u.scale(self.g0 * sp);
        let hess = Tensor2::from_fn(|m, n| {
            let uu = u.comp(m) * u.comp(n);
            let id = if m == n { 1.0 } else { 0.0 };
            self.g0 * (spp * uu + sp / r * (id - uu))
        });
        Jet {
            value: self.g0 * s,
            grad,
            hess,
        }
    }

    fn support_radius(&self, _delta: f64) -> f64 {
        self.outer_radius()
    }

    fn centroid(&self) -> Vec2 {
        self.center_vec()
    }
}

/// Hypothesis of the conservation theorems: the cutoff is constant on the
/// (delta-)support of the test function. True iff
/// `R_f(delta) + |centroid_f - center_g| <= R_g`.
pub fn constant_on_support(g: &PlateauCutoff, f: &SmearingFunction, delta: f64) -> bool {
    debug_assert!(delta > 0.0);
    f.support_radius(delta) + (f.centroid() - g.center_vec()).norm() <= g.radius
}

/// Tagged JSON schema for either function family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionSpec {
    GaussianMix { terms: Vec<GaussTerm> },
    Plateau(PlateauCutoff),
}

impl FunctionSpec {
    pub fn as_smearing(&self) -> Result<SmearingFunction> {
        match self {
            FunctionSpec::GaussianMix { terms } => SmearingFunction::new(terms.clone()),
            FunctionSpec::Plateau(_) => Err(Error::Config(
                "expected a gaussian_mix test function here".into(),
            )),
        }
    }

    pub fn as_plateau(&self) -> Result<PlateauCutoff> {
        match self {
            FunctionSpec::Plateau(p) => Ok(p.clone()),
            FunctionSpec::GaussianMix { .. } => {
                Err(Error::Config("expected a plateau cutoff here".into()))
            }
        }
    }
}
