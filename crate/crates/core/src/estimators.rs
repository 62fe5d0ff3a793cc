//! Estimators built on the quasi-likelihood and on conditional least squares.
//!
//! * QMLE: minimizer of `-ln QL_n` found by Hooke-Jeeves.
//! * CLS: minimizer of squared one-step residuals, each weighted by the
//!   conditional variance of the increment under the Euler or the Milstein
//!   scheme, optionally penalized by `lambda |beta - beta_0|`.
//! * One-step and scoring: a single Newton update of a preliminary estimate
//!   using the quasi-likelihood score and either the observed information or
//!   the summed outer product of per-transition scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{
    neg_log_ql, neg_log_ql_counted, per_observation_scores, ql_derivatives, DerivativeBackend,
};
use crate::model::{Mat2, ModelSpec, Theta};
use crate::optimize::{hooke_jeeves, HjConfig};
use crate::simulate::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Qmle,
    ClsEuler,
    ClsMilstein,
}

impl Objective {
    pub fn as_str(&self) -> &'static str {
        match self {
            Objective::Qmle => "qmle",
            Objective::ClsEuler => "cls-euler",
            Objective::ClsMilstein => "cls-milstein",
        }
    }

    /// Row label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            Objective::Qmle => "QMLE",
            Objective::ClsEuler => "CLS-Euler",
            Objective::ClsMilstein => "CLS",
        }
    }

    pub fn is_cls(&self) -> bool {
        !matches!(self, Objective::Qmle)
    }
}

impl FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qmle" => Ok(Objective::Qmle),
            "cls-euler" => Ok(Objective::ClsEuler),
            "cls-milstein" | "cls" => Ok(Objective::ClsMilstein),
            other => Err(Error::Config(format!(
                "unknown objective '{other}' (expected qmle, cls-euler or cls-milstein)"
            ))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    /// Start point `(alpha_0, beta_0)`.
    pub start: Theta,
    /// Penalty weight `lambda >= 0`; zero disables the penalty.
    pub regularization_weight: f64,
    /// Penalty center; `None` means `start`.
    pub regularization_center: Option<Theta>,
    pub objective: Objective,
    pub optimizer: HjConfig,
    pub derivative_backend: DerivativeBackend,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            start: Theta::new(0.5, 1.0),
            regularization_weight: 1.0,
            regularization_center: None,
            objective: Objective::Qmle,
            optimizer: HjConfig::default(),
            derivative_backend: DerivativeBackend::FiniteDifference,
        }
    }
}

impl EstimationConfig {
    pub fn center(&self) -> Theta {
        self.regularization_center.unwrap_or(self.start)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.regularization_weight >= 0.0 && self.regularization_weight.is_finite()) {
            return Err(Error::Config(format!(
                "regularization weight must be finite and >= 0, got {}",
                self.regularization_weight
            )));
        }
        if !self.start.is_finite() || !self.center().is_finite() {
            return Err(Error::Config("start and regularization center must be finite".into()));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub name: String,
    /// Start point of a one-step or scoring update.
    pub theta_start: Option<Theta>,
    pub theta_hat: Theta,
    pub objective_value: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub clamp_count: usize,
    pub notes: String,
}

impl EstimatorReport {
    pub const CSV_HEADER: [&'static str; 7] =
        ["estimator", "alpha_hat", "beta_hat", "objective", "evaluations", "converged", "clamps"];

    pub fn csv_record(&self) -> [String; 7] {
        [
            self.name.clone(),
            self.theta_hat.alpha.to_string(),
            self.theta_hat.beta.to_string(),
            self.objective_value.to_string(),
            self.evaluations.to_string(),
            self.converged.to_string(),
            self.clamp_count.to_string(),
        ]
    }
}

/// Writes reports as CSV rows under [`EstimatorReport::CSV_HEADER`].
pub fn write_reports_csv<W: std::io::Write>(reports: &[EstimatorReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(EstimatorReport::CSV_HEADER).map_err(io)?;
    for r in reports {
        w.write_record(r.csv_record()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// `B h + (1/8) B_x^2 h^2`: second moment of the Milstein noise
/// `sqrt(B) dW + (1/4) B_x (dW^2 - h)` for `dW ~ N(0, h)`.
pub fn milstein_noise_variance(b: f64, b_x: f64, h: f64) -> f64 {
    b * h + 0.125 * b_x * b_x * h * h
}

fn cls_sum(model: &ModelSpec, theta: Theta, traj: &Trajectory, weight: impl Fn(f64, f64, f64) -> f64) -> Result<f64> {
    let h = traj.step();
    let mut sum = 0.0;
    for (k, (x, y)) in traj.pairs().enumerate() {
        let b = model.checked_diff_sq(theta.beta, x).map_err(|e| match e {
            Error::Ellipticity { .. } => Error::NonFinite(format!("transition k={}: {e}", k + 1)),
            other => other,
        })?;
        let r = y - x - (model.drift)(theta.alpha, x) * h;
        sum += r * r / weight(b, (model.diff_sq_dx)(theta.beta, x), h);
    }
    if sum.is_finite() {
        Ok(sum)
    } else {
        Err(Error::NonFinite(format!("CLS loss at theta={theta}")))
    }
}

/// `sum_k (X_k - X_{k-1} - A(alpha, X_{k-1}) h)^2 / (B(beta, X_{k-1}) h)`
pub fn cls_loss_euler(model: &ModelSpec, theta: Theta, traj: &Trajectory) -> Result<f64> {
    cls_sum(model, theta, traj, |b, _, h| b * h)
}

/// Euler residuals weighted by [`milstein_noise_variance`].
pub fn cls_loss_milstein(model: &ModelSpec, theta: Theta, traj: &Trajectory) -> Result<f64> {
    cls_sum(model, theta, traj, milstein_noise_variance)
}

/// `value + lambda |beta - beta_center|`
pub fn regularized(objective_value: f64, theta: Theta, cfg: &EstimationConfig) -> f64 {
    if cfg.regularization_weight == 0.0 {
        return objective_value;
    }
    objective_value + cfg.regularization_weight * (theta.beta - cfg.center().beta).abs()
}

/// The configured objective at `theta`, penalty included when `lambda > 0`.
pub fn objective_value(model: &ModelSpec, theta: Theta, traj: &Trajectory, cfg: &EstimationConfig) -> Result<f64> {
    let raw = match cfg.objective {
        Objective::Qmle => neg_log_ql(model, theta, traj)?,
        Objective::ClsEuler => cls_loss_euler(model, theta, traj)?,
        Objective::ClsMilstein => cls_loss_milstein(model, theta, traj)?,
    };
    Ok(regularized(raw, theta, cfg))
}

/// Minimizes the configured objective by Hooke-Jeeves from `cfg.start`.
pub fn estimate(model: &ModelSpec, traj: &Trajectory, cfg: &EstimationConfig) -> Result<EstimatorReport> {
    cfg.validate()?;
    let result = hooke_jeeves(
        |t| objective_value(model, t, traj, cfg).unwrap_or(f64::INFINITY),
        cfg.start,
        &cfg.optimizer,
    )?;
    let clamp_count = if cfg.objective == Objective::Qmle {
        neg_log_ql_counted(model, result.theta, traj).map(|q| q.clamps).unwrap_or(0)
    } else {
        0
    };
    let mut notes = format!("start={}", cfg.start);
    if cfg.regularization_weight > 0.0 {
        notes.push_str(&format!(
            "; penalty {}*|beta-{}|",
            cfg.regularization_weight,
            cfg.center().beta
        ));
    }
    if !result.converged {
        notes.push_str("; evaluation budget exhausted before step convergence");
    }
    Ok(EstimatorReport {
        name: cfg.objective.label().to_string(),
        theta_start: None,
        theta_hat: result.theta,
        objective_value: result.value,
        evaluations: result.evaluations,
        converged: result.converged,
        clamp_count,
        notes,
    })
}

/// `theta + M^{-1} g`, refusing singular `M` and non-finite results.
pub fn newton_update(theta: Theta, grad: Theta, matrix: &Mat2, context: &str) -> Result<Theta> {
    let step = matrix.solve(grad).map_err(|e| match e {
        Error::Singular { det, .. } => Error::Singular {
            det,
            context: context.to_string(),
        },
        other => other,
    })?;
    let out = theta + step;
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::Singular {
            det: matrix.det(),
            context: format!("{context}: non-finite update"),
        })
    }
}

fn refined_report(
    name: &str,
    model: &ModelSpec,
    traj: &Trajectory,
    start: Theta,
    updated: Theta,
    evaluations: usize,
    notes: String,
) -> EstimatorReport {
    let (objective_value, clamp_count) = match neg_log_ql_counted(model, updated, traj) {
        Ok(q) => (q.value, q.clamps),
        Err(_) => (f64::NAN, 0),
    };
    EstimatorReport {
        name: name.to_string(),
        theta_start: Some(start),
        theta_hat: updated,
        objective_value,
        evaluations: evaluations + 1,
        converged: true,
        clamp_count,
        notes,
    }
}

/// `theta_start + H^{-1} grad ln QL`, `H` the Hessian of `-ln QL`.
pub fn one_step(
    model: &ModelSpec,
    traj: &Trajectory,
    theta_start: Theta,
    backend: DerivativeBackend,
) -> Result<EstimatorReport> {
    let d = ql_derivatives(model, theta_start, traj, backend)?;
    let updated = newton_update(theta_start, d.grad, &d.hess, "one-step Hessian")?;
    Ok(refined_report(
        "OS",
        model,
        traj,
        theta_start,
        updated,
        d.evaluations,
        format!("start={theta_start}; backend={}", backend.as_str()),
    ))
}

/// One-step update with the Hessian replaced by `sum_k s_k s_k^T`.
pub fn scoring_step(
    model: &ModelSpec,
    traj: &Trajectory,
    theta_start: Theta,
    backend: DerivativeBackend,
) -> Result<EstimatorReport> {
    let scores = per_observation_scores(model, theta_start, traj, backend)?;
    let mut grad = Theta::default();
    let mut outer = Mat2::zeros();
    for s in &scores {
        grad = grad + *s;
        outer = outer + s.outer(s);
    }
    let updated = newton_update(theta_start, grad, &outer, "scoring outer-product matrix")?;
    let passes = match backend {
        DerivativeBackend::FiniteDifference => 4,
        DerivativeBackend::Analytic => 1,
    };
    Ok(refined_report(
        "Scoring",
        model,
        traj,
        theta_start,
        updated,
        passes,
        format!("start={theta_start}; backend={}", backend.as_str()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::ql_score_analytic;
    use crate::model::builtin_model;
    use crate::simulate::{milstein_path, rng_for_seed, simulate, SimConfig};
    use rand_distr::{Distribution, StandardNormal};

    fn sim(model: &str, theta: Theta, horizon: f64, h: f64, seed: u64) -> (ModelSpec, Trajectory) {
        let m = builtin_model(model).unwrap();
        let cfg = SimConfig {
            theta_true: theta,
            x0: 0.0,
            horizon,
            step: h,
            seed,
        };
        let t = simulate(&m, &cfg).unwrap();
        (m, t)
    }

    /// Closed-form Gaussian MLE for the Euler chain of `ou-const`.
    fn ou_mle(traj: &Trajectory) -> Theta {
        let h = traj.step();
        let (num, den) = traj.pairs().fold((0.0, 0.0), |(n, d), (x, y)| (n + x * (x - y), d + x * x));
        let alpha = num / (h * den);
        let rss: f64 = traj.pairs().map(|(x, y)| (y - x + alpha * x * h).powi(2)).sum();
        Theta::new(alpha, rss / (traj.transitions() as f64 * h))
    }

    #[test]
    fn euler_loss_vanishes_on_noise_free_path() {
        let m = builtin_model("ou-const").unwrap();
        let theta = Theta::new(0.5, 1.0);
        let traj = milstein_path(&m, theta, 1.0, 0.5, &[0.0; 20]).unwrap();
        assert_eq!(cls_loss_euler(&m, theta, &traj).unwrap(), 0.0);

        let cfg = EstimationConfig {
            start: theta,
            regularization_weight: 0.0,
            objective: Objective::ClsEuler,
            ..EstimationConfig::default()
        };
        let r = estimate(&m, &traj, &cfg).unwrap();
        assert_eq!(r.theta_hat, theta);
        assert_eq!(r.objective_value, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn euler_cls_alpha_matches_normal_equation() {
        let (m, traj) = sim("ou-const", Theta::new(1.0, 2.0), 200.0, 0.1, 3);
        let (num, den) = traj.pairs().fold((0.0, 0.0), |(n, d), (x, y)| (n + x * (x - y), d + x * x));
        let closed = num / (traj.step() * den);
        let beta = 2.0;
        let cfg = EstimationConfig {
            start: Theta::new(0.3, beta),
            regularization_weight: 0.0,
            objective: Objective::ClsEuler,
            optimizer: HjConfig {
                tol: 1e-10,
                bounds: Some([[-10.0, 10.0], [beta, beta]]),
                ..HjConfig::default()
            },
            ..EstimationConfig::default()
        };
        let r = estimate(&m, &traj, &cfg).unwrap_or_else(|e| panic!("{e}"));
        assert!((r.theta_hat.alpha - closed).abs() < 1e-6 * closed.abs(), "{} vs {closed}", r.theta_hat.alpha);
    }

    #[test]
    fn positive_scaling_keeps_argmin() {
        let (m, traj) = sim("sin-diffusion", Theta::new(1.0, 2.0), 200.0, 0.8, 4);
        let fixed_beta = HjConfig {
            bounds: Some([[-5.0, 5.0], [2.0, 2.0]]),
            ..HjConfig::default()
        };
        let f = |t: Theta| cls_loss_euler(&m, t, &traj).unwrap();
        let a = hooke_jeeves(f, Theta::new(0.5, 2.0), &fixed_beta).unwrap();
        let b = hooke_jeeves(|t| 37.5 * f(t), Theta::new(0.5, 2.0), &fixed_beta).unwrap();
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn milstein_cls_reduces_to_euler_for_constant_diffusion() {
        let (m, traj) = sim("ou-const", Theta::new(1.0, 2.0), 100.0, 0.5, 5);
        for theta in [Theta::new(0.4, 1.0), Theta::new(1.3, 2.7)] {
            assert_eq!(cls_loss_milstein(&m, theta, &traj).unwrap(), cls_loss_euler(&m, theta, &traj).unwrap());
        }
    }

    #[test]
    fn milstein_denominator_example() {
        let m = builtin_model("sin-diffusion").unwrap();
        let (b, bx) = ((m.diff_sq)(2.0, 0.0), (m.diff_sq_dx)(2.0, 0.0));
        assert!((milstein_noise_variance(b, bx, 0.8) - 1.92).abs() < 1e-15);
    }

    #[test]
    fn milstein_denominator_against_monte_carlo() {
        let (b, bx, h): (f64, f64, f64) = (2.0, 2.0, 0.8);
        let n = 1_000_000;
        let mut rng = rng_for_seed(77);
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            let dw = h.sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            let noise = b.sqrt() * dw + 0.25 * bx * (dw * dw - h);
            let sq = noise * noise;
            s += sq;
            s2 += sq * sq;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - milstein_noise_variance(b, bx, h)).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn regularizer_identities_and_monotonicity() {
        let mut cfg = EstimationConfig {
            start: Theta::new(0.5, 1.0),
            ..EstimationConfig::default()
        };
        assert_eq!(regularized(3.0, Theta::new(9.0, 1.0), &cfg), 3.0);
        assert_eq!(regularized(3.0, Theta::new(9.0, 2.5), &cfg), 4.5);
        let mut last = 0.0;
        for k in 0..50 {
            let p = regularized(0.0, Theta::new(1.0, 1.0 + 0.1 * k as f64), &cfg);
            assert!(p >= last);
            last = p;
        }
        cfg.regularization_weight = 0.0;
        assert_eq!(regularized(3.0, Theta::new(9.0, 7.0), &cfg), 3.0);
        cfg.regularization_weight = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn one_step_is_fixed_at_stationary_point() {
        let (m, traj) = sim("ou-const", Theta::new(1.0, 2.0), 50.0, 0.5, 6);
        let mle = ou_mle(&traj);
        let g = ql_score_analytic(&m, mle, &traj).unwrap();
        assert!(g.norm() < 1e-10, "{g:?}");
        let r = one_step(&m, &traj, mle, DerivativeBackend::Analytic).unwrap();
        assert!((r.theta_hat - mle).norm() < 1e-8);
        assert_eq!(r.theta_start, Some(mle));
        let r = one_step(&m, &traj, mle, DerivativeBackend::FiniteDifference).unwrap();
        assert!((r.theta_hat - mle).norm() < 1e-6);
    }

    #[test]
    fn newton_in_alpha_is_exact_for_ou() {
        let (m, traj) = sim("ou-const", Theta::new(1.0, 2.0), 500.0, 0.5, 8);
        let mle = ou_mle(&traj);
        for backend in [DerivativeBackend::Analytic, DerivativeBackend::FiniteDifference] {
            for a0 in [-0.5, 0.3, 2.5] {
                let start = Theta::new(a0, 1.7);
                let d = ql_derivatives(&m, start, &traj, backend).unwrap();
                let alpha = start.alpha + d.grad.alpha / d.hess.get(0, 0);
                let tol = match backend {
                    DerivativeBackend::Analytic => 1e-8,
                    DerivativeBackend::FiniteDifference => 1e-6,
                };
                assert!((alpha - mle.alpha).abs() < tol, "{backend:?} {alpha} vs {}", mle.alpha);
            }
        }
    }

    #[test]
    fn scoring_singular_on_single_transition() {
        let m = builtin_model("sin-diffusion").unwrap();
        let traj = Trajectory::new(0.8, vec![0.3, -0.2]).unwrap();
        for backend in [DerivativeBackend::Analytic, DerivativeBackend::FiniteDifference] {
            let err = scoring_step(&m, &traj, Theta::new(1.0, 2.0), backend).unwrap_err();
            assert!(matches!(err, Error::Singular { .. }), "{err}");
        }
    }

    #[test]
    fn scoring_agrees_with_one_step_for_ou() {
        let truth = Theta::new(1.0, 2.0);
        let (m, traj) = sim("ou-const", truth, 5_000.0, 0.5, 10);
        assert!(traj.transitions() >= 10_000);
        let os = one_step(&m, &traj, truth, DerivativeBackend::FiniteDifference).unwrap();
        let sc = scoring_step(&m, &traj, truth, DerivativeBackend::FiniteDifference).unwrap();
        let (d_os, d_sc) = (os.theta_hat - truth, sc.theta_hat - truth);
        for i in 0..2 {
            let (a, b) = (d_os.get(i), d_sc.get(i));
            assert!((a - b).abs() <= 0.1 * a.abs().max(b.abs()), "component {i}: {a} vs {b}");
        }
    }

    #[test]
    fn update_operations_never_return_nan() {
        let (m, traj) = sim("arctan-diffusion", Theta::new(1.0, 0.7), 100.0, 0.8, 12);
        for start in [Theta::new(0.5, 0.5), Theta::new(3.0, 2.0), Theta::new(-1.0, 0.1)] {
            for backend in [DerivativeBackend::Analytic, DerivativeBackend::FiniteDifference] {
                for r in [one_step(&m, &traj, start, backend), scoring_step(&m, &traj, start, backend)] {
                    match r {
                        Ok(rep) => assert!(rep.theta_hat.is_finite()),
                        Err(e) => assert!(matches!(e, Error::Singular { .. }), "{e}"),
                    }
                }
            }
        }
    }

    #[test]
    fn report_csv_row() {
        let r = EstimatorReport {
            name: "QMLE".into(),
            theta_start: None,
            theta_hat: Theta::new(0.99, 2.01),
            objective_value: 12.5,
            evaluations: 140,
            converged: true,
            clamp_count: 2,
            notes: String::new(),
        };
        let mut buf = Vec::new();
        write_reports_csv(&[r], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "estimator,alpha_hat,beta_hat,objective,evaluations,converged,clamps\nQMLE,0.99,2.01,12.5,140,true,2\n"
        );
    }
}
