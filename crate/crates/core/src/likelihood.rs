//! First-order Hermite expansion of the transition density and the negative
//! log quasi-likelihood built from it.
//!
//! For an observed transition `x -> y` over a step `h` the density is
//!
//! ```text
//! p_h(x, y) = phi_v(z) * {1 + (1/4) h^2 B(beta, x) B_x(beta, x) H_3(z, v)}
//! z = y - x - A(alpha, x) h,    v = B(beta, x) h
//! ```
//!
//! The bracket is floored at [`BRACKET_FLOOR`] before taking logs; every
//! floored transition is counted.
//!
//! Derivatives come from one of three routes:
//!
//! * central finite differences of the objective (the default),
//! * closed-form derivatives of the density above ([`DerivativeBackend::Analytic`]),
//! * a literal transcription of the published score/second-derivative
//!   brackets ([`ql_score_printed`], [`ql_hessian_printed`]), kept only for
//!   comparison reports.

use crate::error::{Error, Result};
use crate::hermite::{hermite_table, log_gauss_unchecked};
use crate::model::{Mat2, ModelSpec, Theta};
use crate::simulate::Trajectory;

/// Lower clamp for the Hermite correction bracket.
pub const BRACKET_FLOOR: f64 = 1e-8;

/// Default relative finite-difference step.
pub const DEFAULT_REL_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeBackend {
    FiniteDifference,
    Analytic,
}

impl DerivativeBackend {
    pub fn as_str(&self) -> &'static str {
        match self {
            DerivativeBackend::FiniteDifference => "finite-difference",
            DerivativeBackend::Analytic => "analytic",
        }
    }
}

/// One evaluated transition density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityEval {
    /// `ln phi_v(z)`
    pub log_base: f64,
    /// `1 + (1/4) h^2 B B_x H_3(z, v)`, before clamping.
    pub bracket: f64,
    pub log_density: f64,
    pub clamped: bool,
}

impl DensityEval {
    /// `phi_v(z) * bracket` without the floor; may be negative in the tails.
    pub fn unclamped_density(&self) -> f64 {
        self.log_base.exp() * self.bracket
    }
}

/// Gradient of `ln QL` and Hessian of `-ln QL` (observed information).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QlDerivatives {
    pub grad: Theta,
    pub hess: Mat2,
    pub backend: DerivativeBackend,
    /// Clamped transitions at `theta`.
    pub clamps: usize,
    /// Full passes over the trajectory.
    pub evaluations: usize,
}

/// `(z, v) = (y - x - A(alpha, x) h, B(beta, x) h)`.
pub fn hermite_frame(model: &ModelSpec, theta: Theta, x: f64, y: f64, h: f64) -> Result<(f64, f64)> {
    check_step(h)?;
    let b = model.checked_diff_sq(theta.beta, x)?;
    Ok((y - x - (model.drift)(theta.alpha, x) * h, b * h))
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("observation step must be positive, got {h}")))
    }
}

#[inline]
fn h3(z: f64, v: f64) -> f64 {
    let u = z / v;
    u * u * u - 3.0 * z / (v * v)
}

pub fn log_transition_density(model: &ModelSpec, theta: Theta, x: f64, y: f64, h: f64) -> Result<DensityEval> {
    check_step(h)?;
    let eval = density_unchecked_step(model, theta, x, y, h)?;
    if !eval.log_density.is_finite() {
        return Err(Error::NonFinite(format!(
            "log density at x={x}, y={y}, theta={theta}"
        )));
    }
    Ok(eval)
}

#[inline]
fn density_unchecked_step(model: &ModelSpec, theta: Theta, x: f64, y: f64, h: f64) -> Result<DensityEval> {
    let b = model.checked_diff_sq(theta.beta, x)?;
    let b_x = (model.diff_sq_dx)(theta.beta, x);
    let z = y - x - (model.drift)(theta.alpha, x) * h;
    let v = b * h;
    let log_base = log_gauss_unchecked(z, v);
    let bracket = 1.0 + 0.25 * h * h * b * b_x * h3(z, v);
    let clamped = !(bracket >= BRACKET_FLOOR);
    let log_density = log_base + if clamped { BRACKET_FLOOR.ln() } else { bracket.ln() };
    Ok(DensityEval {
        log_base,
        bracket,
        log_density,
        clamped,
    })
}

/// `-ln QL_n` and the number of clamped transitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QlValue {
    pub value: f64,
    pub clamps: usize,
}

/// `-sum_k ln p_h(theta; X_{k-1}, X_k)` with clamp accounting.
pub fn neg_log_ql_counted(model: &ModelSpec, theta: Theta, traj: &Trajectory) -> Result<QlValue> {
    let h = traj.step();
    let mut sum = 0.0;
    let mut clamps = 0;
    for (k, (x, y)) in traj.pairs().enumerate() {
        let eval = density_unchecked_step(model, theta, x, y, h).map_err(|e| with_index(e, k + 1))?;
        if !eval.log_density.is_finite() {
            return Err(Error::NonFinite(format!(
                "log density at transition k={} (x={x}, y={y}, theta={theta})",
                k + 1
            )));
        }
        sum += eval.log_density;
        clamps += eval.clamped as usize;
    }
    Ok(QlValue { value: -sum, clamps })
}

pub fn neg_log_ql(model: &ModelSpec, theta: Theta, traj: &Trajectory) -> Result<f64> {
    neg_log_ql_counted(model, theta, traj).map(|q| q.value)
}

/// `ln p_h` for every transition, in order.
pub fn log_density_terms(model: &ModelSpec, theta: Theta, traj: &Trajectory) -> Result<Vec<f64>> {
    let h = traj.step();
    traj.pairs()
        .enumerate()
        .map(|(k, (x, y))| {
            let e = density_unchecked_step(model, theta, x, y, h).map_err(|e| with_index(e, k + 1))?;
            if e.log_density.is_finite() {
                Ok(e.log_density)
            } else {
                Err(Error::NonFinite(format!("log density at transition k={}", k + 1)))
            }
        })
        .collect()
}

fn with_index(e: Error, k: usize) -> Error {
    match e {
        Error::Ellipticity { .. } | Error::NonFinite(_) => Error::NonFinite(format!("transition k={k}: {e}")),
        other => other,
    }
}

fn fd_step(value: f64, rel_step: f64) -> f64 {
    rel_step * (1.0 + value.abs())
}

fn probe<F: FnMut(Theta) -> Result<f64>>(f: &mut F, at: Theta) -> Result<f64> {
    match f(at) {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(Error::NonFinite(format!("objective {v} at probe point {at}"))),
        Err(e) => Err(Error::NonFinite(format!("probe point {at}: {e}"))),
    }
}

/// Central-difference gradient of an arbitrary objective.
pub fn fd_gradient<F: FnMut(Theta) -> Result<f64>>(mut f: F, theta: Theta, rel_step: f64) -> Result<Theta> {
    let mut g = Theta::default();
    for i in 0..2 {
        let e = fd_step(theta.get(i), rel_step);
        let up = probe(&mut f, theta.shifted(i, e))?;
        let down = probe(&mut f, theta.shifted(i, -e))?;
        g.set(i, (up - down) / (2.0 * e));
    }
    Ok(g)
}

/// Central-difference Hessian; the off-diagonal uses the symmetric
/// four-point stencil so the result is exactly symmetric.
pub fn fd_hessian<F: FnMut(Theta) -> Result<f64>>(mut f: F, theta: Theta, rel_step: f64) -> Result<Mat2> {
    let e = [fd_step(theta.alpha, rel_step), fd_step(theta.beta, rel_step)];
    let center = probe(&mut f, theta)?;
    let mut hess = Mat2::zeros();
    for i in 0..2 {
        let up = probe(&mut f, theta.shifted(i, e[i]))?;
        let down = probe(&mut f, theta.shifted(i, -e[i]))?;
        hess.m[i][i] = (up - 2.0 * center + down) / (e[i] * e[i]);
    }
    let at = |da: f64, db: f64| Theta::new(theta.alpha + da * e[0], theta.beta + db * e[1]);
    let pp = probe(&mut f, at(1.0, 1.0))?;
    let pm = probe(&mut f, at(1.0, -1.0))?;
    let mp = probe(&mut f, at(-1.0, 1.0))?;
    let mm = probe(&mut f, at(-1.0, -1.0))?;
    let off = (pp - pm - mp + mm) / (4.0 * e[0] * e[1]);
    hess.m[0][1] = off;
    hess.m[1][0] = off;
    Ok(hess)
}

fn neg_terms(model: &ModelSpec, theta: Theta, traj: &Trajectory) -> Result<Vec<f64>> {
    log_density_terms(model, theta, traj).map_err(|e| Error::NonFinite(format!("probe point {theta}: {e}")))
}

/// Sums a stencil applied transition by transition, so rounding scales with
/// the individual terms rather than with the accumulated total.
fn stencil_sum(points: &[Vec<f64>], weights: &[f64]) -> f64 {
    (0..points[0].len())
        .map(|k| points.iter().zip(weights).map(|(p, w)| w * p[k]).sum::<f64>())
        .sum()
}

/// Gradient of `-ln QL` by central differences.
pub fn ql_gradient_fd(model: &ModelSpec, theta: Theta, traj: &Trajectory, rel_step: f64) -> Result<Theta> {
    let mut g = Theta::default();
    for i in 0..2 {
        let e = fd_step(theta.get(i), rel_step);
        let pts = [neg_terms(model, theta.shifted(i, e), traj)?, neg_terms(model, theta.shifted(i, -e), traj)?];
        g.set(i, -stencil_sum(&pts, &[1.0, -1.0]) / (2.0 * e));
    }
    Ok(g)
}

/// Hessian of `-ln QL` by central differences, same stencil as [`fd_hessian`].
pub fn ql_hessian_fd(model: &ModelSpec, theta: Theta, traj: &Trajectory, rel_step: f64) -> Result<Mat2> {
    let e = [fd_step(theta.alpha, rel_step), fd_step(theta.beta, rel_step)];
    let at = |da: f64, db: f64| Theta::new(theta.alpha + da * e[0], theta.beta + db * e[1]);
    let center = neg_terms(model, theta, traj)?;
    let mut hess = Mat2::zeros();
    for i in 0..2 {
        let pts = [
            neg_terms(model, theta.shifted(i, e[i]), traj)?,
            center.clone(),
            neg_terms(model, theta.shifted(i, -e[i]), traj)?,
        ];
        hess.m[i][i] = -stencil_sum(&pts, &[1.0, -2.0, 1.0]) / (e[i] * e[i]);
    }
    let pts = [
        neg_terms(model, at(1.0, 1.0), traj)?,
        neg_terms(model, at(1.0, -1.0), traj)?,
        neg_terms(model, at(-1.0, 1.0), traj)?,
        neg_terms(model, at(-1.0, -1.0), traj)?,
    ];
    let off = -stencil_sum(&pts, &[1.0, -1.0, -1.0, 1.0]) / (4.0 * e[0] * e[1]);
    hess.m[0][1] = off;
    hess.m[1][0] = off;
    Ok(hess)
}

/// Per-transition score and observed-information contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsDerivatives {
    /// gradient of `ln p`
    pub score: Theta,
    /// `-` Hessian of `ln p`
    pub info: Mat2,
    pub clamped: bool,
}

/// Closed-form derivatives of `ln p_h` for one transition.
///
/// `ln p = ln phi_v(z) + ln P`, with `P = 1 + c(beta) H_3(z, v)`,
/// `c = h^2 B B_x / 4`, `z_alpha = -A_alpha h`, `v_beta = B_beta h`.
pub fn obs_derivatives_exact(model: &ModelSpec, theta: Theta, x: f64, y: f64, h: f64) -> Result<ObsDerivatives> {
    let c = model.coefficients(theta, x);
    if !(c.b > 0.0 && c.b.is_finite()) {
        return Err(Error::Ellipticity { beta: theta.beta, x, value: c.b });
    }
    let v = c.b * h;
    let z = y - x - c.a * h;
    let (v2, v3) = (v * v, v * v * v);
    let (z2, z3) = (z * z, z * z * z);

    let z_a = -c.a_a * h;
    let z_aa = -c.a_aa * h;
    let v_b = c.b_b * h;
    let v_bb = c.b_bb * h;

    // ln phi_v(z) = -ln(2 pi v)/2 - z^2 / (2v)
    let lf_a = -z * z_a / v;
    let lf_aa = -(z_a * z_a + z * z_aa) / v;
    let lf_b = 0.5 * v_b * (z2 / v2 - 1.0 / v);
    let lf_bb = -v_bb / (2.0 * v) + v_b * v_b / (2.0 * v2) + z2 * v_bb / (2.0 * v2) - z2 * v_b * v_b / v3;
    let lf_ab = z * z_a * v_b / v2;

    let k = 0.25 * h * h;
    let cc = k * c.b * c.b_x;
    let cc_b = k * (c.b_b * c.b_x + c.b * c.b_xb);
    let cc_bb = k * (c.b_bb * c.b_x + 2.0 * c.b_b * c.b_xb + c.b * c.b_xbb);

    let v4 = v2 * v2;
    let g = z3 / v3 - 3.0 * z / v2;
    let g_z = 3.0 * z2 / v3 - 3.0 / v2;
    let g_zz = 6.0 * z / v3;
    let g_v = -3.0 * z3 / v4 + 6.0 * z / v3;
    let g_vv = 12.0 * z3 / (v4 * v) - 18.0 * z / v4;
    let g_zv = -9.0 * z2 / v4 + 6.0 / v3;

    let p = 1.0 + cc * g;
    let clamped = !(p >= BRACKET_FLOOR);
    let (lp_a, lp_b, lp_aa, lp_bb, lp_ab) = if clamped {
        (0.0, 0.0, 0.0, 0.0, 0.0)
    } else {
        let q_a = cc * g_z * z_a;
        let q_aa = cc * (g_zz * z_a * z_a + g_z * z_aa);
        let q_b = cc_b * g + cc * g_v * v_b;
        let q_bb = cc_bb * g + 2.0 * cc_b * g_v * v_b + cc * (g_vv * v_b * v_b + g_v * v_bb);
        let q_ab = cc_b * g_z * z_a + cc * g_zv * v_b * z_a;
        (
            q_a / p,
            q_b / p,
            q_aa / p - q_a * q_a / (p * p),
            q_bb / p - q_b * q_b / (p * p),
            q_ab / p - q_a * q_b / (p * p),
        )
    };
    let score = Theta::new(lf_a + lp_a, lf_b + lp_b);
    let hab = lf_ab + lp_ab;
    let info = Mat2::new(-(lf_aa + lp_aa), -hab, -hab, -(lf_bb + lp_bb));
    if !score.is_finite() || !info.is_finite() {
        return Err(Error::NonFinite(format!("analytic derivatives at x={x}, y={y}, theta={theta}")));
    }
    Ok(ObsDerivatives { score, info, clamped })
}

/// The published score and second-derivative brackets, transcribed term by
/// term. `t` and `h` both denote the observation step, `b` is read as `B`,
/// and every `H^{m,x}_h` is evaluated as `H_m(z, v)`.
///
/// The printed matrix elements are made into the Hessian of `-ln p` by
/// dividing the second-derivative term by `p`:
/// `h_ij = (D_i / P)(D_j / P) - D_ij / P`. `D_12` and `D_21` are the two
/// separately printed mixed brackets, so the result need not be symmetric.
pub fn obs_derivatives_printed(model: &ModelSpec, theta: Theta, x: f64, y: f64, h: f64) -> Result<ObsDerivatives> {
    let c = model.coefficients(theta, x);
    if !(c.b > 0.0 && c.b.is_finite()) {
        return Err(Error::Ellipticity { beta: theta.beta, x, value: c.b });
    }
    let v = c.b * h;
    let z = y - x - c.a * h;
    let hm: [f64; 8] = hermite_table(z, v);
    let (t, t2, t3, t4) = (h, h * h, h * h * h, h * h * h * h);
    let (b, bx, bb, bbb, bxb, bxbb) = (c.b, c.b_x, c.b_b, c.b_bb, c.b_xb, c.b_xbb);
    let (aa, aaa, axa, axaa) = (c.a_a, c.a_aa, c.a_xa, c.a_xaa);

    let p = 1.0 + 0.25 * t2 * b * bx * hm[3];
    let clamped = !(p >= BRACKET_FLOOR);
    let p = p.max(BRACKET_FLOOR);

    let d_a = 1.0 + aa * t * hm[1] + t3 / 4.0 * aa * bb * b * hm[4] + t2 / 4.0 * aa * bb + t2 / 4.0 * axa * b * hm[2];
    let d_b = t / 2.0 * bb * hm[2] + bx * bb * b * hm[5] + t / 4.0 * (b * bxb + bx * bb) * hm[3];
    let d_aa = t * aaa * hm[1]
        + t2 * aa * aa * hm[2]
        + t3 / 4.0 * aaa * bx * b * hm[4]
        + t2 / 4.0 * aaa * bx * hm[2]
        + t2 / 2.0 * axaa * b * hm[2];
    let d_ab = t2 / 4.0 * aa * bb * hm[3]
        + t3 / 4.0 * aa * bxb * b * hm[4]
        + t3 / 4.0 * aa * bb * bx * hm[4]
        + t4 / 8.0 * aa * bx * bb * b * hm[6]
        + t2 / 4.0 * aa * bxb * hm[2]
        + t3 / 8.0 * aa * bx * bb * hm[4]
        + t2 / 4.0 * axa * bb * hm[2]
        + t3 / 4.0 * b * axa * bb * hm[4];
    let d_ba = t2 / 4.0 * bb * aa * hm[3]
        + t4 / 8.0 * b * bx * bb * hm[6]
        + t3 / 4.0 * b * bxb * aa * hm[4]
        + t3 / 4.0 * bx * bb * aa * hm[4];
    let d_bb = t / 2.0 * bbb * hm[2]
        + t2 / 4.0 * bb * bb * hm[4]
        + t3 / 8.0 * b * bx * bbb * hm[5]
        + t3 / 8.0 * b * bb * bxb * hm[5]
        + t3 / 8.0 * bb * bb * bx * hm[5]
        + t4 / 16.0 * b * bb * bb * bx * hm[7]
        + t2 / 4.0 * bb * bxb * hm[3]
        + t2 / 4.0 * b * bxbb * hm[3]
        + t3 / 8.0 * b * bxb * bb * hm[5]
        + t2 / 4.0 * bx * bbb * hm[3]
        + t2 / 4.0 * bb * bxb * hm[3]
        + t3 / 8.0 * bb * bb * bx * hm[5];

    let (sa, sb) = (d_a / p, d_b / p);
    let score = Theta::new(sa, sb);
    let info = Mat2::new(sa * sa - d_aa / p, sa * sb - d_ab / p, sa * sb - d_ba / p, sb * sb - d_bb / p);
    if !score.is_finite() || !info.is_finite() {
        return Err(Error::NonFinite(format!("printed derivatives at x={x}, y={y}, theta={theta}")));
    }
    Ok(ObsDerivatives { score, info, clamped })
}

type ObsFn = fn(&ModelSpec, Theta, f64, f64, f64) -> Result<ObsDerivatives>;

fn sum_obs(model: &ModelSpec, theta: Theta, traj: &Trajectory, f: ObsFn) -> Result<(Theta, Mat2, usize)> {
    let h = traj.step();
    let mut score = Theta::default();
    let mut info = Mat2::zeros();
    let mut clamps = 0;
    for (k, (x, y)) in traj.pairs().enumerate() {
        let d = f(model, theta, x, y, h).map_err(|e| with_index(e, k + 1))?;
        score = score + d.score;
        info = info + d.info;
        clamps += d.clamped as usize;
    }
    Ok((score, info, clamps))
}

/// Gradient of `ln QL` from closed-form derivatives.
pub fn ql_score_analytic(model: &ModelSpec, theta: Theta, traj: &Trajectory) -> Result<Theta> {
    sum_obs(model, theta, traj, obs_derivatives_exact).map(|r| r.0)
}

/// Hessian of `-ln QL` from closed-form derivatives.
pub fn ql_hessian_analytic(model: &ModelSpec, theta: Theta, traj: &Trajectory) -> Result<Mat2> {
    sum_obs(model, theta, traj, obs_derivatives_exact).map(|r| r.1)
}

/// Gradient of `ln QL` from the transcribed published score brackets.
pub fn ql_score_printed(model: &ModelSpec, theta: Theta, traj: &Trajectory) -> Result<Theta> {
    sum_obs(model, theta, traj, obs_derivatives_printed).map(|r| r.0)
}

/// Hessian of `-ln QL` from the transcribed published second-derivative brackets.
pub fn ql_hessian_printed(model: &ModelSpec, theta: Theta, traj: &Trajectory) -> Result<Mat2> {
    sum_obs(model, theta, traj, obs_derivatives_printed).map(|r| r.1)
}

/// Score of `ln QL` and Hessian of `-ln QL` from the chosen backend.
pub fn ql_derivatives(
    model: &ModelSpec,
    theta: Theta,
    traj: &Trajectory,
    backend: DerivativeBackend,
) -> Result<QlDerivatives> {
    match backend {
        DerivativeBackend::FiniteDifference => {
            let neg_grad = ql_gradient_fd(model, theta, traj, DEFAULT_REL_STEP)?;
            let hess = ql_hessian_fd(model, theta, traj, DEFAULT_REL_STEP)?;
            let clamps = neg_log_ql_counted(model, theta, traj)?.clamps;
            Ok(QlDerivatives {
                grad: -neg_grad,
                hess,
                backend,
                clamps,
                evaluations: 4 + 9 + 1,
            })
        }
        DerivativeBackend::Analytic => {
            let (grad, hess, clamps) = sum_obs(model, theta, traj, obs_derivatives_exact)?;
            Ok(QlDerivatives {
                grad,
                hess,
                backend,
                clamps,
                evaluations: 1,
            })
        }
    }
}

/// Per-transition scores `grad ln p_k`, by central differences of the
/// per-transition log densities or in closed form.
pub fn per_observation_scores(
    model: &ModelSpec,
    theta: Theta,
    traj: &Trajectory,
    backend: DerivativeBackend,
) -> Result<Vec<Theta>> {
    match backend {
        DerivativeBackend::FiniteDifference => {
            let mut scores = vec![Theta::default(); traj.transitions()];
            for i in 0..2 {
                let e = fd_step(theta.get(i), DEFAULT_REL_STEP);
                let up = log_density_terms(model, theta.shifted(i, e), traj)?;
                let down = log_density_terms(model, theta.shifted(i, -e), traj)?;
                for (s, (u, d)) in scores.iter_mut().zip(up.iter().zip(&down)) {
                    s.set(i, (u - d) / (2.0 * e));
                }
            }
            Ok(scores)
        }
        DerivativeBackend::Analytic => {
            let h = traj.step();
            traj.pairs()
                .enumerate()
                .map(|(k, (x, y))| {
                    obs_derivatives_exact(model, theta, x, y, h)
                        .map(|d| d.score)
                        .map_err(|e| with_index(e, k + 1))
                })
                .collect()
        }
    }
}

/// Relative disagreement of one derivative component across backends.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDiscrepancy {
    pub component: &'static str,
    pub finite_difference: f64,
    pub analytic: f64,
    pub printed: f64,
    pub analytic_rel_err: f64,
    pub printed_rel_err: f64,
}

/// Score (of `ln QL`) and Hessian (of `-ln QL`) from all three routes,
/// component by component, relative to the finite-difference values.
pub fn backend_comparison(model: &ModelSpec, theta: Theta, traj: &Trajectory) -> Result<Vec<ComponentDiscrepancy>> {
    let fd = ql_derivatives(model, theta, traj, DerivativeBackend::FiniteDifference)?;
    let (a_score, a_hess, _) = sum_obs(model, theta, traj, obs_derivatives_exact)?;
    let (p_score, p_hess, _) = sum_obs(model, theta, traj, obs_derivatives_printed)?;
    let rel = |x: f64, reference: f64| (x - reference).abs() / reference.abs().max(1e-12);
    let mut out = Vec::with_capacity(6);
    let score_names = ["score_alpha", "score_beta"];
    for (i, name) in score_names.into_iter().enumerate() {
        let (f, a, p) = (fd.grad.get(i), a_score.get(i), p_score.get(i));
        out.push(ComponentDiscrepancy {
            component: name,
            finite_difference: f,
            analytic: a,
            printed: p,
            analytic_rel_err: rel(a, f),
            printed_rel_err: rel(p, f),
        });
    }
    let hess_names = [["hess_aa", "hess_ab"], ["hess_ba", "hess_bb"]];
    for i in 0..2 {
        for j in 0..2 {
            let (f, a, p) = (fd.hess.get(i, j), a_hess.get(i, j), p_hess.get(i, j));
            out.push(ComponentDiscrepancy {
                component: hess_names[i][j],
                finite_difference: f,
                analytic: a,
                printed: p,
                analytic_rel_err: rel(a, f),
                printed_rel_err: rel(p, f),
            });
        }
    }
    Ok(out)
}
