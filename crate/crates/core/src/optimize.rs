//! Hooke-Jeeves pattern search over the `(alpha, beta)` plane.
//!
//! Exploratory moves probe `+step` then `-step` along alpha, then along beta,
//! accepting only strict improvements. A successful exploration from the
//! base point triggers pattern moves to `x + acceleration * (x - base)`,
//! each followed by an exploration around the pattern point; the pattern is
//! kept only while the explored point improves on the current base. A failed
//! exploration divides every step by `step_divisor`. The search stops once
//! every step is below `tol` or the evaluation budget is spent.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::Theta;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HjConfig {
    /// Initial exploratory step per coordinate.
    pub initial_step: [f64; 2],
    /// Factor dividing the steps after a failed exploration.
    pub step_divisor: f64,
    /// Multiplier on the pattern vector.
    pub acceleration: f64,
    pub tol: f64,
    pub max_evals: usize,
    /// Optional `[lo, hi]` box per coordinate.
    pub bounds: Option<[[f64; 2]; 2]>,
}

impl Default for HjConfig {
    fn default() -> Self {
        Self {
            initial_step: [0.5, 0.5],
            step_divisor: 2.0,
            acceleration: 1.1,
            tol: 1e-4,
            max_evals: 100_000,
            bounds: None,
        }
    }
}

impl HjConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.initial_step.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad(format!("initial_step must be positive, got {:?}", self.initial_step));
        }
        if !(self.step_divisor > 1.0) {
            return bad(format!("step_divisor must exceed 1, got {}", self.step_divisor));
        }
        if !(self.acceleration >= 1.0) {
            return bad(format!("acceleration must be >= 1, got {}", self.acceleration));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_evals == 0 {
            return bad("max_evals must be positive".into());
        }
        if let Some(b) = self.bounds {
            if b.iter().any(|[lo, hi]| !(lo <= hi)) {
                return bad(format!("bounds must satisfy lo <= hi, got {b:?}"));
            }
        }
        Ok(())
    }

    fn in_bounds(&self, t: Theta) -> bool {
        match self.bounds {
            None => true,
            Some(b) => (0..2).all(|i| t.get(i) >= b[i][0] && t.get(i) <= b[i][1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjResult {
    pub theta: Theta,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective values of successive accepted base points, starting with
    /// the start point.
    pub accepted: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Start,
    Explore,
    Pattern,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Start => "start",
            Phase::Explore => "explore",
            Phase::Pattern => "pattern",
        }
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub eval: usize,
    pub theta: Theta,
    pub value: f64,
    pub phase: Phase,
}

/// Writes a trace as `eval,alpha,beta,value,phase`.
pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["eval", "alpha", "beta", "value", "phase"]).map_err(io)?;
    for t in trace {
        w.write_record([
            t.eval.to_string(),
            t.theta.alpha.to_string(),
            t.theta.beta.to_string(),
            t.value.to_string(),
            t.phase.as_str().to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

struct Counted<'a, F> {
    f: F,
    cfg: &'a HjConfig,
    evals: usize,
    trace: Option<&'a mut Vec<TraceEntry>>,
}

impl<F: FnMut(Theta) -> f64> Counted<'_, F> {
    /// `None` once the budget is spent. Out-of-bounds and non-finite
    /// probes come back as `+inf`.
    fn eval(&mut self, t: Theta, phase: Phase) -> Option<f64> {
        if self.evals >= self.cfg.max_evals {
            return None;
        }
        if !self.cfg.in_bounds(t) {
            return Some(f64::INFINITY);
        }
        self.evals += 1;
        let v = (self.f)(t);
        let v = if v.is_finite() { v } else { f64::INFINITY };
        if let Some(trace) = self.trace.as_deref_mut() {
            trace.push(TraceEntry {
                eval: self.evals,
                theta: t,
                value: v,
                phase,
            });
        }
        Some(v)
    }

    /// Coordinate-wise exploration around `x`. `None` when the budget runs
    /// out mid-way; the best point so far is then returned through `best`.
    fn explore(&mut self, x: Theta, fx: f64, steps: &[f64; 2], best: &mut (Theta, f64)) -> Option<(Theta, f64)> {
        let (mut x, mut fx) = (x, fx);
        for (i, &s) in steps.iter().enumerate() {
            for delta in [s, -s] {
                let probe = x.shifted(i, delta);
                let fp = self.eval(probe, Phase::Explore)?;
                if fp < fx {
                    x = probe;
                    fx = fp;
                    if fp < best.1 {
                        *best = (probe, fp);
                    }
                    break;
                }
            }
        }
        Some((x, fx))
    }
}

pub fn hooke_jeeves<F: FnMut(Theta) -> f64>(objective: F, start: Theta, cfg: &HjConfig) -> Result<HjResult> {
    run(objective, start, cfg, None)
}

/// [`hooke_jeeves`] plus the full evaluation trace.
pub fn hooke_jeeves_traced<F: FnMut(Theta) -> f64>(
    objective: F,
    start: Theta,
    cfg: &HjConfig,
) -> Result<(HjResult, Vec<TraceEntry>)> {
    let mut trace = Vec::new();
    let result = run(objective, start, cfg, Some(&mut trace))?;
    Ok((result, trace))
}

fn run<F: FnMut(Theta) -> f64>(
    objective: F,
    start: Theta,
    cfg: &HjConfig,
    trace: Option<&mut Vec<TraceEntry>>,
) -> Result<HjResult> {
    cfg.validate()?;
    if !start.is_finite() {
        return Err(Error::Optimize(format!("start point {start} is not finite")));
    }
    if !cfg.in_bounds(start) {
        return Err(Error::Optimize(format!("start point {start} lies outside the bounds")));
    }
    let mut counted = Counted {
        f: objective,
        cfg,
        evals: 0,
        trace,
    };
    let f_start = counted.eval(start, Phase::Start).unwrap_or(f64::INFINITY);
    if !f_start.is_finite() {
        return Err(Error::Optimize(format!("objective is not finite at start point {start}")));
    }

    let mut base = start;
    let mut f_base = f_start;
    let mut accepted = vec![f_start];
    let mut steps = cfg.initial_step;
    let mut best = (base, f_base);
    let mut converged = false;

    'outer: loop {
        let Some((x, fx)) = counted.explore(base, f_base, &steps, &mut best) else {
            break;
        };
        if fx < f_base {
            let (mut x, mut fx) = (x, fx);
            loop {
                let pattern = x + (x - base) * cfg.acceleration;
                base = x;
                f_base = fx;
                accepted.push(f_base);
                let Some(fp) = counted.eval(pattern, Phase::Pattern) else {
                    break 'outer;
                };
                if fp < best.1 {
                    best = (pattern, fp);
                }
                let Some((xp, fxp)) = counted.explore(pattern, fp, &steps, &mut best) else {
                    break 'outer;
                };
                if fxp < f_base {
                    x = xp;
                    fx = fxp;
                } else {
                    break;
                }
            }
        } else {
            for s in steps.iter_mut() {
                *s /= cfg.step_divisor;
            }
            if steps.iter().all(|&s| s < cfg.tol) {
                converged = true;
                break;
            }
        }
    }

    // On budget exhaustion a pattern point may beat the last accepted base;
    // report the best evaluated point either way.
    let (theta, value) = if best.1 < f_base && cfg.in_bounds(best.0) {
        best
    } else {
        (base, f_base)
    };
    Ok(HjResult {
        theta,
        value,
        evaluations: counted.evals,
        converged,
        accepted,
    })
}
