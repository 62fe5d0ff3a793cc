//! Parametric scalar diffusion `dX = A(alpha, X) dt + sigma(beta, X) dW`.
//!
//! A model is described by its drift `A`, its squared diffusion `B = sigma^2`
//! and every partial derivative the quasi-likelihood formulas consume. All
//! derivatives are supplied analytically.

mod theta;

pub use theta::{Mat2, Theta};

use crate::error::{Error, Result};

/// Signature shared by every coefficient function: `(parameter, state) -> value`.
pub type CoefFn = fn(f64, f64) -> f64;

/// Drift, squared diffusion and their partial derivatives.
///
/// Drift fields take `(alpha, x)`, diffusion fields take `(beta, x)`.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    /// A(alpha, x)
    pub drift: CoefFn,
    /// d/d alpha A
    pub drift_da: CoefFn,
    /// d^2/d alpha^2 A
    pub drift_daa: CoefFn,
    /// d^2/dx d alpha A
    pub drift_dxa: CoefFn,
    /// d^3/dx d alpha^2 A
    pub drift_dxaa: CoefFn,
    /// B(beta, x) = sigma^2
    pub diff_sq: CoefFn,
    /// d/dx B
    pub diff_sq_dx: CoefFn,
    /// d/d beta B
    pub diff_sq_db: CoefFn,
    /// d^2/d beta^2 B
    pub diff_sq_dbb: CoefFn,
    /// d^2/dx d beta B
    pub diff_sq_dxb: CoefFn,
    /// d^3/dx d beta^2 B
    pub diff_sq_dxbb: CoefFn,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Every coefficient and derivative at one `(theta, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefValues {
    pub a: f64,
    pub a_a: f64,
    pub a_aa: f64,
    pub a_xa: f64,
    pub a_xaa: f64,
    pub b: f64,
    pub b_x: f64,
    pub b_b: f64,
    pub b_bb: f64,
    pub b_xb: f64,
    pub b_xbb: f64,
}

impl ModelSpec {
    pub fn drift_at(&self, theta: Theta, x: f64) -> f64 {
        (self.drift)(theta.alpha, x)
    }

    pub fn diff_sq_at(&self, theta: Theta, x: f64) -> f64 {
        (self.diff_sq)(theta.beta, x)
    }

    /// `B(beta, x)`, rejecting non-positive or non-finite values.
    pub fn checked_diff_sq(&self, beta: f64, x: f64) -> Result<f64> {
        let value = (self.diff_sq)(beta, x);
        if value > 0.0 && value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Ellipticity { beta, x, value })
        }
    }

    pub fn coefficients(&self, theta: Theta, x: f64) -> CoefValues {
        let (a, b) = (theta.alpha, theta.beta);
        CoefValues {
            a: (self.drift)(a, x),
            a_a: (self.drift_da)(a, x),
            a_aa: (self.drift_daa)(a, x),
            a_xa: (self.drift_dxa)(a, x),
            a_xaa: (self.drift_dxaa)(a, x),
            b: (self.diff_sq)(b, x),
            b_x: (self.diff_sq_dx)(b, x),
            b_b: (self.diff_sq_db)(b, x),
            b_bb: (self.diff_sq_dbb)(b, x),
            b_xb: (self.diff_sq_dxb)(b, x),
            b_xbb: (self.diff_sq_dxbb)(b, x),
        }
    }
}

pub const BUILTIN_MODELS: [&str; 3] = ["sin-diffusion", "arctan-diffusion", "ou-const"];

fn zero(_: f64, _: f64) -> f64 {
    0.0
}

// A = -alpha x
fn neg_linear_drift(a: f64, x: f64) -> f64 {
    -a * x
}
fn neg_linear_drift_da(_: f64, x: f64) -> f64 {
    -x
}
fn neg_linear_drift_dxa(_: f64, _: f64) -> f64 {
    -1.0
}

// A = alpha (0.5 - x)
fn reverting_drift(a: f64, x: f64) -> f64 {
    a * (0.5 - x)
}
fn reverting_drift_da(_: f64, x: f64) -> f64 {
    0.5 - x
}

// B = 2 + sin(beta x)
fn sin_b(b: f64, x: f64) -> f64 {
    2.0 + (b * x).sin()
}
fn sin_b_dx(b: f64, x: f64) -> f64 {
    b * (b * x).cos()
}
fn sin_b_db(b: f64, x: f64) -> f64 {
    x * (b * x).cos()
}
fn sin_b_dbb(b: f64, x: f64) -> f64 {
    -x * x * (b * x).sin()
}
fn sin_b_dxb(b: f64, x: f64) -> f64 {
    (b * x).cos() - b * x * (b * x).sin()
}
fn sin_b_dxbb(b: f64, x: f64) -> f64 {
    -2.0 * x * (b * x).sin() - b * x * x * (b * x).cos()
}

// B = arctan(beta x) + 2
fn atan_b(b: f64, x: f64) -> f64 {
    (b * x).atan() + 2.0
}
fn atan_b_dx(b: f64, x: f64) -> f64 {
    b / (1.0 + b * b * x * x)
}
fn atan_b_db(b: f64, x: f64) -> f64 {
    x / (1.0 + b * b * x * x)
}
fn atan_b_dbb(b: f64, x: f64) -> f64 {
    let d = 1.0 + b * b * x * x;
    -2.0 * b * x * x * x / (d * d)
}
fn atan_b_dxb(b: f64, x: f64) -> f64 {
    let u = b * b * x * x;
    (1.0 - u) / ((1.0 + u) * (1.0 + u))
}
fn atan_b_dxbb(b: f64, x: f64) -> f64 {
    let u = b * b * x * x;
    2.0 * b * x * x * (u - 3.0) / (1.0 + u).powi(3)
}

// B = beta
fn const_b(b: f64, _: f64) -> f64 {
    b
}
fn one(_: f64, _: f64) -> f64 {
    1.0
}

/// Looks up one of the built-in models.
///
/// * `sin-diffusion`: `A = -alpha x`, `B = 2 + sin(beta x)`
/// * `arctan-diffusion`: `A = alpha (0.5 - x)`, `B = arctan(beta x) + 2`
/// * `ou-const`: `A = -alpha x`, `B = beta` (Ornstein-Uhlenbeck, exact Gaussian law)
pub fn builtin_model(name: &str) -> Result<ModelSpec> {
    let spec = match name {
        "sin-diffusion" => ModelSpec {
            name: name.to_string(),
            drift: neg_linear_drift,
            drift_da: neg_linear_drift_da,
            drift_daa: zero,
            drift_dxa: neg_linear_drift_dxa,
            drift_dxaa: zero,
            diff_sq: sin_b,
            diff_sq_dx: sin_b_dx,
            diff_sq_db: sin_b_db,
            diff_sq_dbb: sin_b_dbb,
            diff_sq_dxb: sin_b_dxb,
            diff_sq_dxbb: sin_b_dxbb,
        },
        "arctan-diffusion" => ModelSpec {
            name: name.to_string(),
            drift: reverting_drift,
            drift_da: reverting_drift_da,
            drift_daa: zero,
            drift_dxa: neg_linear_drift_dxa,
            drift_dxaa: zero,
            diff_sq: atan_b,
            diff_sq_dx: atan_b_dx,
            diff_sq_db: atan_b_db,
            diff_sq_dbb: atan_b_dbb,
            diff_sq_dxb: atan_b_dxb,
            diff_sq_dxbb: atan_b_dxbb,
        },
        "ou-const" => ModelSpec {
            name: name.to_string(),
            drift: neg_linear_drift,
            drift_da: neg_linear_drift_da,
            drift_daa: zero,
            drift_dxa: neg_linear_drift_dxa,
            drift_dxaa: zero,
            diff_sq: const_b,
            diff_sq_dx: zero,
            diff_sq_db: one,
            diff_sq_dbb: zero,
            diff_sq_dxb: zero,
            diff_sq_dxbb: zero,
        },
        _ => {
            return Err(Error::UnknownModel {
                name: name.to_string(),
                available: BUILTIN_MODELS.join(", "),
            })
        }
    };
    Ok(spec)
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// `count` evenly spaced nodes including both ends.
    pub fn node(&self, i: usize, count: usize) -> f64 {
        if count <= 1 {
            return self.lo;
        }
        self.lo + (self.hi - self.lo) * i as f64 / (count - 1) as f64
    }
}

/// Minimum of `B(beta, x)` over a `grid × grid` lattice.
///
/// A non-positive result means the model is not uniformly elliptic on the
/// scanned range and should be rejected by the caller.
pub fn ellipticity_scan(
    model: &ModelSpec,
    beta_range: Interval,
    x_range: Interval,
    grid: usize,
) -> Result<f64> {
    if grid < 2 {
        return Err(Error::Domain(format!("ellipticity grid must be >= 2, got {grid}")));
    }
    for r in [beta_range, x_range] {
        if !r.lo.is_finite() || !r.hi.is_finite() || r.lo > r.hi {
            return Err(Error::Domain(format!("invalid interval [{}, {}]", r.lo, r.hi)));
        }
    }
    let mut min = f64::INFINITY;
    for i in 0..grid {
        let beta = beta_range.node(i, grid);
        for j in 0..grid {
            let x = x_range.node(j, grid);
            let b = (model.diff_sq)(beta, x);
            if !b.is_finite() {
                return Err(Error::NonFinite(format!(
                    "B(beta={beta}, x={x}) = {b} at grid node ({i}, {j})"
                )));
            }
            min = min.min(b);
        }
    }
    Ok(min)
}

/// One row of a [`derivative_check`] report.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCheck {
    pub field: &'static str,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic - numeric| / max(1, |analytic|)`
    pub rel_err: f64,
    pub passed: bool,
}

fn central(f: impl Fn(f64) -> f64, at: f64) -> f64 {
    let h = 1e-6 * (1.0 + at.abs());
    (f(at + h) - f(at - h)) / (2.0 * h)
}

/// Compares every derivative field against a central difference of its parent
/// function, step `1e-6 (1 + |argument|)`.
pub fn derivative_check(model: &ModelSpec, theta: Theta, x: f64, rel_tol: f64) -> Vec<DerivativeCheck> {
    let (a, b) = (theta.alpha, theta.beta);
    let m = model;
    let rows: [(&'static str, f64, f64); 9] = [
        ("drift_da", (m.drift_da)(a, x), central(|s| (m.drift)(s, x), a)),
        ("drift_daa", (m.drift_daa)(a, x), central(|s| (m.drift_da)(s, x), a)),
        ("drift_dxa", (m.drift_dxa)(a, x), central(|s| (m.drift_da)(a, s), x)),
        ("drift_dxaa", (m.drift_dxaa)(a, x), central(|s| (m.drift_dxa)(s, x), a)),
        ("diff_sq_dx", (m.diff_sq_dx)(b, x), central(|s| (m.diff_sq)(b, s), x)),
        ("diff_sq_db", (m.diff_sq_db)(b, x), central(|s| (m.diff_sq)(s, x), b)),
        ("diff_sq_dbb", (m.diff_sq_dbb)(b, x), central(|s| (m.diff_sq_db)(s, x), b)),
        ("diff_sq_dxb", (m.diff_sq_dxb)(b, x), central(|s| (m.diff_sq_dx)(s, x), b)),
        ("diff_sq_dxbb", (m.diff_sq_dxbb)(b, x), central(|s| (m.diff_sq_dxb)(s, x), b)),
    ];
    rows.into_iter()
        .map(|(field, analytic, numeric)| {
            let rel_err = (analytic - numeric).abs() / analytic.abs().max(1.0);
            DerivativeCheck {
                field,
                analytic,
                numeric,
                rel_err,
                passed: rel_err <= rel_tol && rel_err.is_finite(),
            }
        })
        .collect()
}
