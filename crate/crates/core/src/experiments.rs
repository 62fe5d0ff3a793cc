//! Monte Carlo comparison of estimators and objective-surface grids.
//!
//! Replication `i` simulates one trajectory with seed `base_seed + i` and runs
//! every configured pipeline on that same trajectory. Replications run on a
//! dedicated thread pool; results are reduced in replication order, so the
//! summary does not depend on the number of workers.

use std::io::Write;

use log::debug;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{estimate, one_step, scoring_step, EstimationConfig, EstimatorReport};
use crate::likelihood::DerivativeBackend;
use crate::model::{builtin_model, Interval, ModelSpec, Theta};
use crate::simulate::{replication_seed, simulate, SimConfig, Trajectory};

/// Marker written for undefined statistics.
pub const ABSENT: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Refinement {
    OneStep,
    Scoring,
}

impl Refinement {
    fn prefix(&self) -> &'static str {
        match self {
            Refinement::OneStep => "OS",
            Refinement::Scoring => "Scoring",
        }
    }
}

/// A base estimator followed by zero or more refinements, each applied to
/// the base estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub base: EstimationConfig,
    pub refinements: Vec<Refinement>,
}

impl Pipeline {
    /// Parses `objective[+onestep][+scoring]`, e.g. `qmle+onestep+scoring`.
    pub fn parse(spec: &str, template: &EstimationConfig) -> Result<Pipeline> {
        let mut parts = spec.split('+').map(str::trim);
        let objective = parts
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Config(format!("empty pipeline '{spec}'")))?
            .parse()?;
        let refinements = parts
            .map(|p| match p {
                "onestep" | "os" | "one-step" => Ok(Refinement::OneStep),
                "scoring" => Ok(Refinement::Scoring),
                other => Err(Error::Config(format!(
                    "unknown refinement '{other}' in pipeline '{spec}' (expected onestep or scoring)"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Pipeline {
            base: EstimationConfig {
                objective,
                ..template.clone()
            },
            refinements,
        })
    }

    pub fn base_label(&self) -> String {
        self.base.objective.label().to_string()
    }

    pub fn refinement_label(&self, r: Refinement) -> String {
        format!("{} ({})", r.prefix(), self.base_label())
    }
}

/// Result of one estimator on one trajectory.
pub type Outcome = std::result::Result<EstimatorReport, String>;

/// Report labels in output order: every base estimate first, then each
/// pipeline's refinements.
pub fn row_labels(pipelines: &[Pipeline]) -> Vec<String> {
    let mut labels: Vec<String> = pipelines.iter().map(Pipeline::base_label).collect();
    for p in pipelines {
        labels.extend(p.refinements.iter().map(|r| p.refinement_label(*r)));
    }
    labels
}

/// Runs all pipelines on one trajectory; rows follow [`row_labels`].
pub fn run_pipelines(model: &ModelSpec, traj: &Trajectory, pipelines: &[Pipeline], backend: DerivativeBackend) -> Vec<(String, Outcome)> {
    let bases: Vec<Outcome> = pipelines
        .iter()
        .map(|p| match estimate(model, traj, &p.base) {
            Ok(r) if r.converged => Ok(r),
            Ok(r) => Err(format!(
                "{} did not converge within {} evaluations",
                r.name, r.evaluations
            )),
            Err(e) => Err(e.to_string()),
        })
        .collect();
    let mut rows: Vec<(String, Outcome)> = pipelines
        .iter()
        .zip(&bases)
        .map(|(p, b)| (p.base_label(), b.clone()))
        .collect();
    for (p, base) in pipelines.iter().zip(&bases) {
        for &r in &p.refinements {
            let label = p.refinement_label(r);
            let outcome = match base {
                Err(_) => Err(format!("base estimate {} failed", p.base_label())),
                Ok(b) => {
                    let refined = match r {
                        Refinement::OneStep => one_step(model, traj, b.theta_hat, backend),
                        Refinement::Scoring => scoring_step(model, traj, b.theta_hat, backend),
                    };
                    refined
                        .map(|mut rep| {
                            rep.name = label.clone();
                            rep
                        })
                        .map_err(|e| e.to_string())
                }
            };
            rows.push((label, outcome));
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: String,
    /// Simulation template; `seed` is the base seed.
    pub sim: SimConfig,
    pub replications: usize,
    pub pipelines: Vec<Pipeline>,
    pub backend: DerivativeBackend,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.pipelines.is_empty() {
            return Err(Error::Config("at least one estimator pipeline is required".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        for p in &self.pipelines {
            p.base.validate()?;
        }
        self.sim.observation_count()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub rows: Vec<(String, Outcome)>,
}

/// Per-estimator moments; standard deviations use the `n - 1` divisor over
/// successful replications and are absent below two successes.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: String,
    pub mean_alpha: Option<f64>,
    pub sd_alpha: Option<f64>,
    pub mean_beta: Option<f64>,
    pub sd_beta: Option<f64>,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub rows: Vec<SummaryRow>,
    pub replications: Vec<ReplicationRecord>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), |x| x.to_string())
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), sd)
}

impl McSummary {
    pub fn row(&self, estimator: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }

    /// `estimator,mean_alpha,sd_alpha,mean_beta,sd_beta,failures`
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["estimator", "mean_alpha", "sd_alpha", "mean_beta", "sd_beta", "failures"])
            .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.estimator.clone(),
                fmt_opt(r.mean_alpha),
                fmt_opt(r.sd_alpha),
                fmt_opt(r.mean_beta),
                fmt_opt(r.sd_beta),
                r.failures.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per (replication, estimator).
    pub fn write_replications_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record([
            "replication",
            "seed",
            "estimator",
            "alpha_hat",
            "beta_hat",
            "objective",
            "evaluations",
            "converged",
            "clamps",
            "error",
        ])
        .map_err(io)?;
        for rec in &self.replications {
            for (label, outcome) in &rec.rows {
                let mut row = vec![rec.index.to_string(), rec.seed.to_string(), label.clone()];
                match outcome {
                    Ok(r) => {
                        row.extend(r.csv_record().into_iter().skip(1));
                        row.push(String::new());
                    }
                    Err(e) => {
                        row.extend(std::iter::repeat(String::new()).take(6));
                        row.push(e.clone());
                    }
                }
                w.write_record(&row).map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn run_replication(model: &ModelSpec, cfg: &ExperimentConfig, index: usize) -> ReplicationRecord {
    let seed = replication_seed(cfg.sim.seed, index);
    debug!("replication {index}: seed {seed}");
    let rows = match simulate(model, &cfg.sim.with_seed(seed)) {
        Ok(traj) => run_pipelines(model, &traj, &cfg.pipelines, cfg.backend),
        Err(e) => row_labels(&cfg.pipelines)
            .into_iter()
            .map(|l| (l, Err(format!("simulation failed: {e}"))))
            .collect(),
    };
    ReplicationRecord { index, seed, rows }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<McSummary> {
    cfg.validate()?;
    let model = builtin_model(&cfg.model)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let replications: Vec<ReplicationRecord> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|i| run_replication(&model, cfg, i))
            .collect()
    });

    let labels = row_labels(&cfg.pipelines);
    let rows = labels
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let mut alphas = Vec::new();
            let mut betas = Vec::new();
            let mut failures = 0;
            for rec in &replications {
                match &rec.rows[j].1 {
                    Ok(r) => {
                        alphas.push(r.theta_hat.alpha);
                        betas.push(r.theta_hat.beta);
                    }
                    Err(_) => failures += 1,
                }
            }
            let (mean_alpha, sd_alpha) = mean_sd(&alphas);
            let (mean_beta, sd_beta) = mean_sd(&betas);
            SummaryRow {
                estimator: label.clone(),
                mean_alpha,
                sd_alpha,
                mean_beta,
                sd_beta,
                successes: alphas.len(),
                failures,
            }
        })
        .collect();
    Ok(McSummary { rows, replications })
}

/// Rectangular `(alpha, beta)` grid, both ends included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub alpha: Interval,
    pub beta: Interval,
    pub resolution: [usize; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    /// `(theta, value)` in alpha-major order; `None` marks a failed cell.
    pub cells: Vec<(Theta, Option<f64>)>,
    pub failed: usize,
}

impl SurfaceGrid {
    /// First cell attaining the minimum.
    pub fn argmin(&self) -> Option<(Theta, f64)> {
        self.cells
            .iter()
            .filter_map(|(t, v)| v.map(|v| (*t, v)))
            .fold(None, |best: Option<(Theta, f64)>, (t, v)| match best {
                Some((_, bv)) if bv <= v => best,
                _ => Some((t, v)),
            })
    }

    /// `alpha,beta,value`; failed cells leave `value` empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["alpha", "beta", "value"]).map_err(io)?;
        for (t, v) in &self.cells {
            w.write_record([t.alpha.to_string(), t.beta.to_string(), v.map(|v| v.to_string()).unwrap_or_default()])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates `objective` on every grid node.
pub fn loss_surface<F>(objective: F, grid: &GridSpec) -> Result<SurfaceGrid>
where
    F: Fn(Theta) -> Result<f64> + Sync,
{
    let [na, nb] = grid.resolution;
    if na < 2 || nb < 2 {
        return Err(Error::Config(format!("surface resolution must be >= 2 per axis, got {na}x{nb}")));
    }
    let cells: Vec<(Theta, Option<f64>)> = (0..na * nb)
        .into_par_iter()
        .map(|k| {
            let t = Theta::new(grid.alpha.node(k / nb, na), grid.beta.node(k % nb, nb));
            (t, objective(t).ok().filter(|v| v.is_finite()))
        })
        .collect();
    let failed = cells.iter().filter(|(_, v)| v.is_none()).count();
    Ok(SurfaceGrid { cells, failed })
}
