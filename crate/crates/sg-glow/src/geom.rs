//! Small 2-vectors and symmetric 2x2 tensors.
//!
//! In Euclidean signature both components are spatial; in Minkowski signature
//! component 0 is time. Index pairs on [`Tensor2`] refer to Cartesian
//! coordinates `(1,2)` in Euclidean formulas and to light cone components
//! `(u,v)` in Minkowski ones; the container itself is signature-agnostic.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec2(pub f64, pub f64);

impl Vec2 {
    pub const ZERO: Vec2 = Vec2(0.0, 0.0);

    pub fn dot(self, other: Vec2) -> f64 {
        self.0 * other.0 + self.1 * other.1
    }

    /// Squared Euclidean norm.
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2(self.0 * s, self.1 * s)
    }

    pub fn comp(self, i: usize) -> f64 {
        match i {
            0 => self.0,
            1 => self.1,
            _ => panic!("Vec2 index out of range"),
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2(self.0 + rhs.0, self.1 + rhs.1)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2(self.0 - rhs.0, self.1 - rhs.1)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2(-self.0, -self.1)
    }
}

/// Symmetric-by-use 2x2 tensor with entries of type `T` (real or complex).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor2<T> {
    pub c: [[T; 2]; 2],
}

impl<T> Tensor2<T>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> + Default,
{
    pub fn zero() -> Self {
        Tensor2 {
            c: [[T::default(); 2]; 2],
        }
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> T) -> Self {
        Tensor2 {
            c: [[f(0, 0), f(0, 1)], [f(1, 0), f(1, 1)]],
        }
    }

    pub fn map2(self, other: Tensor2<T>, mut f: impl FnMut(T, T) -> T) -> Self {
        Tensor2::from_fn(|m, n| f(self.c[m][n], other.c[m][n]))
    }

    pub fn add_t(self, other: Tensor2<T>) -> Self {
        self.map2(other, |a, b| a + b)
    }

    pub fn sub_t(self, other: Tensor2<T>) -> Self {
        self.map2(other, |a, b| a - b)
    }

    pub fn scale(self, s: f64) -> Self {
        Tensor2::from_fn(|m, n| self.c[m][n] * s)
    }

    pub fn trace(self) -> T {
        self.c[0][0] + self.c[1][1]
    }
}

impl Tensor2<f64> {
    /// `T_μν - (1/2) δ_μν T_ρρ` (Euclidean trace removal).
    pub fn traceless_euclid(self) -> Self {
        let half_tr = 0.5 * self.trace();
        Tensor2::from_fn(|m, n| self.c[m][n] - if m == n { half_tr } else { 0.0 })
    }

    pub fn max_abs(self) -> f64 {
        self.c
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn diag(d: f64) -> Self {
        Tensor2 {
            c: [[d, 0.0], [0.0, d]],
        }
    }
}

impl Tensor2<Complex64> {
    pub fn max_abs(self) -> f64 {
        self.c
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.norm()))
    }

    pub fn scale_c(self, s: Complex64) -> Self {
        Tensor2::from_fn(|m, n| self.c[m][n] * s)
    }

    /// `T_μν - (1/2) η_μν η^{ρσ} T_ρσ` in light cone components, where
    /// `η_uv = η_vu = -1/2` and `η^{uv} = η^{vu} = -2`: removes the
    /// Minkowski trace `η^{ρσ}T_ρσ = -4 T_uv`.
    pub fn traceless_mink(self) -> Self {
        // (1/2) η_μν η^{ρσ} T_ρσ = (1/2)(-1/2)(-4 T_uv) = T_uv on uv/vu.
        let t_uv = 0.5 * (self.c[0][1] + self.c[1][0]);
        Tensor2 {
            c: [
                [self.c[0][0], self.c[0][1] - t_uv],
                [self.c[1][0] - t_uv, self.c[1][1]],
            ],
        }
    }
}

/// Symmetrised outer product of two real 2-vectors: `a_(μ b_ν)`.
pub fn sym_outer(a: Vec2, b: Vec2) -> Tensor2<f64> {
    Tensor2 {
        c: [
            [a.0 * b.0, 0.5 * (a.0 * b.1 + a.1 * b.0)],
            [0.5 * (a.0 * b.1 + a.1 * b.0), a.1 * b.1],
        ],
    }
}
