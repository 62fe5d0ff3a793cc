//! Parameter pair `(alpha, beta)` and the 2×2 linear algebra used by the
//! Newton-type refinements.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Drift parameter `alpha` and diffusion parameter `beta`.
///
/// Also doubles as a plain 2-vector (gradients, scores, steps).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Theta {
    pub alpha: f64,
    pub beta: f64,
}

impl Theta {
    pub const fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite()
    }

    pub fn get(&self, i: usize) -> f64 {
        match i {
            0 => self.alpha,
            1 => self.beta,
            _ => panic!("Theta index {i} out of range"),
        }
    }

    pub fn set(&mut self, i: usize, value: f64) {
        match i {
            0 => self.alpha = value,
            1 => self.beta = value,
            _ => panic!("Theta index {i} out of range"),
        }
    }

    /// `self + delta * e_i`
    pub fn shifted(&self, i: usize, delta: f64) -> Self {
        let mut out = *self;
        out.set(i, self.get(i) + delta);
        out
    }

    pub fn dot(&self, other: &Theta) -> f64 {
        self.alpha * other.alpha + self.beta * other.beta
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn outer(&self, other: &Theta) -> Mat2 {
        Mat2::new(
            self.alpha * other.alpha,
            self.alpha * other.beta,
            self.beta * other.alpha,
            self.beta * other.beta,
        )
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.alpha, self.beta]
    }
}

impl From<[f64; 2]> for Theta {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(alpha={}, beta={})", self.alpha, self.beta)
    }
}

impl Add for Theta {
    type Output = Theta;
    fn add(self, rhs: Theta) -> Theta {
        Theta::new(self.alpha + rhs.alpha, self.beta + rhs.beta)
    }
}

impl Sub for Theta {
    type Output = Theta;
    fn sub(self, rhs: Theta) -> Theta {
        Theta::new(self.alpha - rhs.alpha, self.beta - rhs.beta)
    }
}

impl Mul<f64> for Theta {
    type Output = Theta;
    fn mul(self, rhs: f64) -> Theta {
        Theta::new(self.alpha * rhs, self.beta * rhs)
    }
}

impl Neg for Theta {
    type Output = Theta;
    fn neg(self) -> Theta {
        Theta::new(-self.alpha, -self.beta)
    }
}

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self {
            m: [[a11, a12], [a21, a22]],
        }
    }

    pub const fn zeros() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn mul_vec(&self, v: Theta) -> Theta {
        Theta::new(
            self.m[0][0] * v.alpha + self.m[0][1] * v.beta,
            self.m[1][0] * v.alpha + self.m[1][1] * v.beta,
        )
    }

    /// Solves `self * x = rhs`.
    ///
    /// The matrix counts as singular when `|det| <= 1e-12 * (1 + ||M||_F^2)`;
    /// there is no pseudo-inverse fallback.
    pub fn solve(&self, rhs: Theta) -> Result<Theta> {
        let det = self.det();
        let norm = self.norm();
        if !det.is_finite() || det.abs() <= 1e-12 * (1.0 + norm * norm) {
            return Err(Error::Singular {
                det,
                context: format!("2x2 solve with matrix {:?}", self.m),
            });
        }
        let [[a, b], [c, d]] = self.m;
        Ok(Theta::new(
            (d * rhs.alpha - b * rhs.beta) / det,
            (a * rhs.beta - c * rhs.alpha) / det,
        ))
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] += rhs.m[i][j];
            }
        }
        out
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: f64) -> Mat2 {
        let mut out = self;
        out.m.iter_mut().flatten().for_each(|v| *v *= rhs);
        out
    }
}
