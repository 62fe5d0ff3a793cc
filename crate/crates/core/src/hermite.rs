//! Gauss kernel `phi_t(x)` and the scaled Hermite polynomials `H_m(x, t)`
//! defined by `(-1)^m d^m/dx^m phi_t(x) = H_m(x, t) phi_t(x)`.
//!
//! Evaluation uses the three-term recurrence
//! `H_{m+1} = (x/t) H_m - (m/t) H_{m-1}`, `H_0 = 1`, `H_1 = x/t`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Highest supported order. The likelihood derivatives use orders up to 7.
pub const MAX_ORDER: usize = 10;

fn check_scale(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("Gauss kernel scale must be positive, got t = {t}")))
    }
}

/// `(2 pi t)^(-1/2) exp(-x^2 / (2t))`
pub fn gauss_kernel(x: f64, t: f64) -> Result<f64> {
    check_scale(t)?;
    Ok((-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt())
}

/// Natural log of [`gauss_kernel`].
pub fn log_gauss_kernel(x: f64, t: f64) -> Result<f64> {
    check_scale(t)?;
    Ok(log_gauss_unchecked(x, t))
}

#[inline]
pub(crate) fn log_gauss_unchecked(x: f64, t: f64) -> f64 {
    -0.5 * (2.0 * PI * t).ln() - x * x / (2.0 * t)
}

/// `H_m(x, t)` for `m <= MAX_ORDER`.
pub fn hermite(m: usize, x: f64, t: f64) -> Result<f64> {
    check_scale(t)?;
    if m > MAX_ORDER {
        return Err(Error::UnsupportedOrder(m));
    }
    let table: [f64; MAX_ORDER + 1] = hermite_table(x, t);
    Ok(table[m])
}

/// `[H_0, ..., H_{N-1}]` at `(x, t)`. The caller guarantees `t > 0`.
#[inline]
pub(crate) fn hermite_table<const N: usize>(x: f64, t: f64) -> [f64; N] {
    let mut h = [0.0; N];
    if N == 0 {
        return h;
    }
    h[0] = 1.0;
    if N == 1 {
        return h;
    }
    let inv_t = 1.0 / t;
    h[1] = x * inv_t;
    for m in 1..N - 1 {
        h[m + 1] = (x * h[m] - m as f64 * h[m - 1]) * inv_t;
    }
    h
}
