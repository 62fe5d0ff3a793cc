//! Milstein simulation of the diffusion and an exact sampler for the
//! Ornstein-Uhlenbeck oracle model.
//!
//! Gaussian increments come from ChaCha20 (`rand_chacha::ChaCha20Rng`,
//! seeded with `seed_from_u64`) mapped through the ziggurat sampler of
//! `rand_distr::StandardNormal`. Replication `i` of an experiment uses seed
//! `base_seed + i` (wrapping), see [`replication_seed`].

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Theta};

/// States beyond this magnitude abort a simulation.
pub const EXPLOSION_BOUND: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub theta_true: Theta,
    pub x0: f64,
    /// Horizon `T`.
    pub horizon: f64,
    /// Observation step `h`.
    pub step: f64,
    pub seed: u64,
}

impl SimConfig {
    /// `n = floor(T / h)`, treating ratios within 1e-9 of an integer as that
    /// integer so that e.g. `10000 / 0.8` yields 12500.
    pub fn observation_count(&self) -> Result<usize> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Domain(format!("step h must be positive, got {}", self.step)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon T must be positive, got {}", self.horizon)));
        }
        if !self.x0.is_finite() || !self.theta_true.is_finite() {
            return Err(Error::Domain("x0 and theta_true must be finite".into()));
        }
        let ratio = self.horizon / self.step;
        let rounded = ratio.round();
        let n = if (ratio - rounded).abs() <= 1e-9 * rounded.max(1.0) {
            rounded
        } else {
            ratio.floor()
        };
        if n < 2.0 {
            return Err(Error::TooFewObservations {
                horizon: self.horizon,
                step: self.step,
            });
        }
        Ok(n as usize)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

/// Seed for replication `index` derived from an experiment's base seed.
pub fn replication_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

/// Deterministic generator for a seed.
pub fn rng_for_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Uniformly spaced observations `X_0, ..., X_n` with step `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    step: f64,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Domain(format!("trajectory step must be positive, got {step}")));
        }
        if values.len() < 2 {
            return Err(Error::Domain(format!(
                "trajectory needs at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("trajectory value at index {k}")));
        }
        Ok(Self { step, values })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn x0(&self) -> f64 {
        self.values[0]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of transitions `n` (one less than the number of values).
    pub fn transitions(&self) -> usize {
        self.values.len() - 1
    }

    /// `(X_{k-1}, X_k)` pairs for `k = 1..=n`.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.windows(2).map(|w| (w[0], w[1]))
    }

    /// Writes `index,time,x` rows, `time = index * h`. Floats use the
    /// shortest representation that round-trips.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["index", "time", "x"]).map_err(io)?;
        for (i, x) in self.values.iter().enumerate() {
            let t = i as f64 * self.step;
            w.write_record([i.to_string(), t.to_string(), x.to_string()]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format written by [`Trajectory::write_csv`]. Lines starting
    /// with `#` are skipped. The step is recovered from the time column and
    /// must be uniform.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = reader
            .headers()
            .map_err(|e| Error::Data { row: 1, msg: e.to_string() })?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["index", "time", "x"] {
            return Err(Error::Data {
                row: 1,
                msg: format!("expected header 'index,time,x', got '{}'", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut lines = Vec::new();
        for (k, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Data {
                row: e.position().map(|p| p.line() as usize).unwrap_or(k + 2),
                msg: e.to_string(),
            })?;
            let row = record.position().map(|p| p.line() as usize).unwrap_or(k + 2);
            let bad = |msg: String| Error::Data { row, msg };
            if record.len() != 3 {
                return Err(bad(format!("expected 3 fields, got {}", record.len())));
            }
            let index: usize = record[0].parse().map_err(|_| bad(format!("bad index '{}'", &record[0])))?;
            if index != k {
                return Err(bad(format!("expected index {k}, got {index}")));
            }
            let t: f64 = record[1].parse().map_err(|_| bad(format!("bad time '{}'", &record[1])))?;
            let x: f64 = record[2].parse().map_err(|_| bad(format!("bad value '{}'", &record[2])))?;
            if !t.is_finite() || !x.is_finite() {
                return Err(bad("non-finite time or value".into()));
            }
            times.push(t);
            values.push(x);
            lines.push(row);
        }
        if values.len() < 2 {
            return Err(Error::Data {
                row: values.len() + 1,
                msg: "fewer than 2 observations".into(),
            });
        }
        let step = times[1] - times[0];
        for (k, t) in times.iter().enumerate() {
            let expected = times[0] + k as f64 * step;
            if (t - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
                return Err(Error::Data {
                    row: lines[k],
                    msg: format!("non-uniform time grid: expected {expected}, got {t}"),
                });
            }
        }
        Trajectory::new(step, values)
    }
}

/// One Milstein step:
/// `x + A(alpha, x) h + sqrt(B) dw + (1/4) dB/dx (dw^2 - h)`.
///
/// The correction `(1/2) sigma sigma_x` equals `(1/4) B_x` for `B = sigma^2`.
pub fn milstein_step(model: &ModelSpec, theta: Theta, x: f64, h: f64, dw: f64) -> Result<f64> {
    let b = model.checked_diff_sq(theta.beta, x)?;
    let a = (model.drift)(theta.alpha, x);
    let b_x = (model.diff_sq_dx)(theta.beta, x);
    Ok(x + a * h + b.sqrt() * dw + 0.25 * b_x * (dw * dw - h))
}

/// Runs the Milstein recursion over given Wiener increments.
pub fn milstein_path(model: &ModelSpec, theta: Theta, x0: f64, h: f64, increments: &[f64]) -> Result<Trajectory> {
    let mut values = Vec::with_capacity(increments.len() + 1);
    values.push(x0);
    let mut x = x0;
    for (i, &dw) in increments.iter().enumerate() {
        x = milstein_step(model, theta, x, h, dw)?;
        if !x.is_finite() || x.abs() > EXPLOSION_BOUND {
            return Err(Error::Explosion { step: i + 1, value: x });
        }
        values.push(x);
    }
    Trajectory::new(h, values)
}

/// Simulates `n = floor(T/h)` Milstein steps with `dw ~ N(0, h)`.
pub fn simulate(model: &ModelSpec, cfg: &SimConfig) -> Result<Trajectory> {
    let n = cfg.observation_count()?;
    let mut rng = rng_for_seed(cfg.seed);
    let sd = cfg.step.sqrt();
    let increments: Vec<f64> = (0..n)
        .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    milstein_path(model, cfg.theta_true, cfg.x0, cfg.step, &increments)
}

/// Mean and variance of the exact OU transition `dX = -alpha X dt + sqrt(b) dW`
/// over a step `h` from `x`.
pub fn ou_exact_moments(alpha: f64, b_const: f64, x: f64, h: f64) -> (f64, f64) {
    let decay = (-alpha * h).exp();
    let var = b_const * (-(-2.0 * alpha * h).exp_m1()) / (2.0 * alpha);
    (x * decay, var)
}

/// Samples the exact OU transition law step by step. `cfg.theta_true` is ignored.
pub fn simulate_ou_exact(alpha: f64, b_const: f64, cfg: &SimConfig) -> Result<Trajectory> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("OU mean reversion must be positive, got {alpha}")));
    }
    if !(b_const > 0.0) {
        return Err(Error::Domain(format!("OU variance coefficient must be positive, got {b_const}")));
    }
    let n = cfg.observation_count()?;
    let mut rng = rng_for_seed(cfg.seed);
    let (_, var) = ou_exact_moments(alpha, b_const, 0.0, cfg.step);
    let decay = (-alpha * cfg.step).exp();
    let sd = var.sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut x = cfg.x0;
    values.push(x);
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        x = x * decay + sd * z;
        values.push(x);
    }
    Trajectory::new(cfg.step, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;

    fn cfg(theta: Theta, horizon: f64, step: f64, seed: u64) -> SimConfig {
        SimConfig {
            theta_true: theta,
            x0: 0.0,
            horizon,
            step,
            seed,
        }
    }

    #[test]
    fn ou_step_without_noise() {
        let m = builtin_model("ou-const").unwrap();
        let next = milstein_step(&m, Theta::new(1.0, 4.0), 1.0, 0.5, 0.0).unwrap();
        assert_eq!(next, 0.5);
    }

    #[test]
    fn vanishing_step_keeps_state() {
        let m = builtin_model("sin-diffusion").unwrap();
        let next = milstein_step(&m, Theta::new(1.0, 2.0), 0.3, 1e-14, 0.0).unwrap();
        assert!((next - 0.3).abs() < 1e-13);
    }

    #[test]
    fn sin_correction_term() {
        let m = builtin_model("sin-diffusion").unwrap();
        let next = milstein_step(&m, Theta::new(1.0, 0.5), 0.0, 0.8, 0.0).unwrap();
        assert!((next + 0.1).abs() < 1e-15, "{next}");
        // sigma sigma_x / 2 with sigma_x from a central difference.
        let sigma = |x: f64| (2.0 + (0.5 * x).sin()).sqrt();
        let d = 1e-6;
        let sigma_x = (sigma(d) - sigma(-d)) / (2.0 * d);
        let fd_next = 0.5 * sigma(0.0) * sigma_x * (0.0 - 0.8);
        assert!((next - fd_next).abs() < 1e-9);
    }

    #[test]
    fn ellipticity_violation() {
        let mut m = builtin_model("ou-const").unwrap();
        m.diff_sq = |_, _| -1.0;
        assert!(matches!(
            milstein_step(&m, Theta::new(1.0, 1.0), 0.0, 0.1, 0.1),
            Err(Error::Ellipticity { .. })
        ));
    }

    #[test]
    fn explosion_names_step() {
        let m = builtin_model("ou-const").unwrap();
        // alpha = -100: x_{k+1} = 101 x_k with no noise.
        let err = milstein_path(&m, Theta::new(-100.0, 1.0), 1.0, 1.0, &[0.0; 10]).unwrap_err();
        assert_eq!(err, Error::Explosion { step: 6, value: 101f64.powi(6) });
    }

    #[test]
    fn table_one_length() {
        let m = builtin_model("sin-diffusion").unwrap();
        let t = simulate(&m, &cfg(Theta::new(1.0, 2.0), 10_000.0, 0.8, 1)).unwrap();
        assert_eq!(t.values().len(), 12_501);
        assert_eq!(t.x0(), 0.0);
    }

    #[test]
    fn deterministic_under_seed() {
        let m = builtin_model("arctan-diffusion").unwrap();
        let c = cfg(Theta::new(1.0, 0.7), 100.0, 0.5, 99);
        assert_eq!(simulate(&m, &c).unwrap(), simulate(&m, &c).unwrap());
        assert_ne!(simulate(&m, &c).unwrap(), simulate(&m, &c.with_seed(100)).unwrap());
    }

    #[test]
    fn too_few_observations() {
        let m = builtin_model("ou-const").unwrap();
        let err = simulate(&m, &cfg(Theta::new(1.0, 1.0), 0.5, 0.8, 0)).unwrap_err();
        assert!(err.to_string().contains("fewer than 2 observations"));
    }

    #[test]
    fn ou_stationary_variance() {
        let m = builtin_model("ou-const").unwrap();
        let t = simulate(&m, &cfg(Theta::new(1.0, 4.0), 10_000.0, 0.1, 5)).unwrap();
        let v = t.values();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        // Stationary variance of the Euler chain is beta h / (1 - (1 - alpha h)^2),
        // within 6% of beta / (2 alpha) = 2 at h = 0.1.
        assert!((var - 2.0).abs() < 0.2, "{var}");
    }

    #[test]
    fn increments_are_standard_gaussian() {
        let h: f64 = 0.8;
        let mut rng = rng_for_seed(3);
        let n = 20_000;
        let dw: Vec<f64> = (0..n)
            .map(|_| h.sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let mean = dw.iter().sum::<f64>() / n as f64;
        let var = dw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * (h / n as f64).sqrt());
        assert!((var - h).abs() < 4.0 * h * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn ou_exact_small_step_matches_euler_mean() {
        let (mean, _) = ou_exact_moments(1.0, 4.0, 1.0, 1e-6);
        assert!((mean - (1.0 - 1e-6)).abs() < 1e-9);
    }

    #[test]
    fn ou_exact_one_step_moments() {
        let n = 100_000;
        let (alpha, b, h) = (1.0, 4.0, 0.5);
        let mut rng = rng_for_seed(11);
        let (_, var) = ou_exact_moments(alpha, b, 0.0, h);
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (-alpha * h).exp() + var.sqrt() * z
            })
            .collect();
        let m = samples.iter().sum::<f64>() / n as f64;
        let v = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want_mean = (-0.5f64).exp();
        let want_var = 4.0 * (1.0 - (-1.0f64).exp()) / 2.0;
        assert!((m - want_mean).abs() < 3.0 * (want_var / n as f64).sqrt());
        assert!((v - want_var).abs() < 3.0 * want_var * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn ou_exact_sampler_is_deterministic_and_validates() {
        let c = cfg(Theta::new(1.0, 4.0), 50.0, 0.5, 8);
        assert_eq!(simulate_ou_exact(1.0, 4.0, &c).unwrap(), simulate_ou_exact(1.0, 4.0, &c).unwrap());
        assert!(simulate_ou_exact(0.0, 4.0, &c).is_err());
        assert!(simulate_ou_exact(-1.0, 4.0, &c).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = builtin_model("sin-diffusion").unwrap();
        let t = simulate(&m, &cfg(Theta::new(1.0, 2.0), 40.0, 0.8, 21)).unwrap();
        let mut buf = b"# comment line\n".to_vec();
        t.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), t.values());
        assert!((back.step() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn csv_errors_name_the_row() {
        let text = "index,time,x\n0,0,1.0\n1,0.5,abc\n";
        let err = Trajectory::read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Data { row: 3, .. }), "{err}");
        let text = "index,time,x\n0,0,1.0\n1,0.5,2.0\n2,1.5,2.0\n";
        let err = Trajectory::read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Data { row: 4, .. }), "{err}");
    }
}
