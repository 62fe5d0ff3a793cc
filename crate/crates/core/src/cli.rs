//! Command-line front end: TOML run configs and the `simulate`, `estimate`,
//! `surface` and `montecarlo` subcommands.
//!
//! CSV goes to `--out` or stdout; progress and summaries go to stderr. Every
//! CSV output starts with a comment line
//! `# diffest <version> config_sha256=<hex> seed=<seed>`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use log::info;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{estimate, one_step, scoring_step, write_reports_csv, objective_value, EstimationConfig, EstimatorReport, Objective};
use crate::experiments::{loss_surface, run_experiment, ExperimentConfig, GridSpec, Pipeline, Refinement};
use crate::likelihood::DerivativeBackend;
use crate::model::{builtin_model, Interval, ModelSpec, Theta};
use crate::optimize::HjConfig;
use crate::simulate::{simulate, SimConfig, Trajectory};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub name: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { name: "sin-diffusion".into() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub alpha: f64,
    pub beta: f64,
    pub x0: f64,
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            x0: 0.0,
            horizon: 10_000.0,
            step: 0.8,
            seed: 20_240_101,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationSection {
    pub start_alpha: f64,
    pub start_beta: f64,
    /// `objective[+onestep][+scoring]` per entry.
    pub pipelines: Vec<String>,
    pub regularization_weight: f64,
    /// Penalty center; defaults to `start_beta`.
    pub regularization_center_beta: Option<f64>,
    /// Also penalize the QMLE objective.
    pub regularize_qmle: bool,
    pub backend: DerivativeBackend,
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self {
            start_alpha: 0.5,
            start_beta: 1.0,
            pipelines: vec!["qmle+onestep+scoring".into(), "cls-euler+onestep+scoring".into()],
            regularization_weight: 1.0,
            regularization_center_beta: None,
            regularize_qmle: false,
            backend: DerivativeBackend::FiniteDifference,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub replications: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { replications: 100 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSection {
    pub objective: String,
    pub alpha_range: [f64; 2],
    pub beta_range: [f64; 2],
    pub resolution: [usize; 2],
}

impl Default for SurfaceSection {
    fn default() -> Self {
        Self {
            objective: "qmle".into(),
            alpha_range: [0.5, 1.5],
            beta_range: [0.1, 1.5],
            resolution: [100, 100],
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Per-replication CSV written by `montecarlo`.
    pub replications: Option<PathBuf>,
}

/// Parsed run configuration. Missing keys take the defaults above.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub simulation: SimulationSection,
    pub estimation: EstimationSection,
    pub optimizer: HjConfig,
    pub experiment: ExperimentSection,
    pub surface: SurfaceSection,
    pub output: OutputSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().trim().to_string();
            match e.span() {
                Some(span) => Error::Config(format!("line {}: {msg}", line_of(text, span.start))),
                None => Error::Config(msg),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        builtin_model(&self.model.name)?;
        self.sim_config().observation_count()?;
        self.optimizer.validate()?;
        let pipelines = self.pipelines()?;
        if pipelines.is_empty() {
            return Err(Error::Config("estimation.pipelines must not be empty".into()));
        }
        for p in &pipelines {
            p.base.validate()?;
        }
        if self.experiment.replications == 0 {
            return Err(Error::Config("experiment.replications must be >= 1".into()));
        }
        self.surface_objective()?;
        let s = &self.surface;
        for (name, r) in [("alpha_range", s.alpha_range), ("beta_range", s.beta_range)] {
            if !(r[0] < r[1]) || !r.iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("surface.{name} must be finite with lo < hi, got {r:?}")));
            }
        }
        if s.resolution.iter().any(|&n| n < 2) {
            return Err(Error::Config(format!("surface.resolution must be >= 2 per axis, got {:?}", s.resolution)));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelSpec> {
        builtin_model(&self.model.name)
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            theta_true: Theta::new(s.alpha, s.beta),
            x0: s.x0,
            horizon: s.horizon,
            step: s.step,
            seed: s.seed,
        }
    }

    /// Estimation settings for one objective. The penalty applies to the CLS
    /// objectives, and to QMLE only with `regularize_qmle`.
    pub fn estimation_config(&self, objective: Objective) -> EstimationConfig {
        let e = &self.estimation;
        let start = Theta::new(e.start_alpha, e.start_beta);
        let penalized = objective.is_cls() || e.regularize_qmle;
        EstimationConfig {
            start,
            regularization_weight: if penalized { e.regularization_weight } else { 0.0 },
            regularization_center: e.regularization_center_beta.map(|b| Theta::new(start.alpha, b)),
            objective,
            optimizer: self.optimizer.clone(),
            derivative_backend: e.backend,
        }
    }

    pub fn pipelines(&self) -> Result<Vec<Pipeline>> {
        self.estimation
            .pipelines
            .iter()
            .map(|spec| {
                let mut p = Pipeline::parse(spec, &EstimationConfig::default())?;
                p.base = self.estimation_config(p.base.objective);
                Ok(p)
            })
            .collect()
    }

    pub fn surface_objective(&self) -> Result<Objective> {
        self.surface.objective.parse()
    }

    pub fn grid(&self) -> GridSpec {
        let s = &self.surface;
        GridSpec {
            alpha: Interval { lo: s.alpha_range[0], hi: s.alpha_range[1] },
            beta: Interval { lo: s.beta_range[0], hi: s.beta_range[1] },
            resolution: s.resolution,
        }
    }

    pub fn experiment_config(&self, replications: Option<usize>, workers: usize) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            model: self.model.name.clone(),
            sim: self.sim_config(),
            replications: replications.unwrap_or(self.experiment.replications),
            pipelines: self.pipelines()?,
            backend: self.estimation.backend,
            workers,
        })
    }
}

/// A config together with the SHA-256 of its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
}

impl LoadedConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Ok(Self {
            config: RunConfig::parse(text)?,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn header(&self, seed: u64) -> String {
        format!("# diffest {VERSION} config_sha256={} seed={seed}\n", self.sha256)
    }
}

#[derive(Debug, Parser)]
#[command(name = "diffest", version, about = "Parameter estimation for scalar diffusions from discrete observations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Run the configured estimator pipelines on one trajectory.
    Estimate(EstimateArgs),
    /// Evaluate an objective on an (alpha, beta) grid.
    Surface(SurfaceArgs),
    /// Monte Carlo comparison of the configured pipelines.
    Montecarlo(MontecarloArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["data", "simulate"])))]
pub struct EstimateArgs {
    pub config: PathBuf,
    /// Trajectory CSV (`index,time,x`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Simulate the trajectory from the config instead.
    #[arg(long)]
    pub simulate: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    pub config: PathBuf,
    /// Trajectory CSV; simulated from the config when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MontecarloArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "DIFFEST_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-replication CSV; overrides `output.replications`.
    #[arg(long)]
    pub per_replication: Option<PathBuf>,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_with_header(
    path: Option<&Path>,
    header: &str,
    body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    let mut out = open_output(path)?;
    out.write_all(header.as_bytes())?;
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

fn load_trajectory(data: Option<&Path>, model: &ModelSpec, sim: &SimConfig) -> Result<Trajectory> {
    match data {
        Some(p) => {
            let file = fs::File::open(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            Trajectory::read_csv(io::BufReader::new(file)).map_err(|e| match e {
                Error::Data { row, msg } => Error::Data {
                    row,
                    msg: format!("{}: {msg}", p.display()),
                },
                other => other,
            })
        }
        None => simulate(model, sim),
    }
}

/// Runs a parsed command line. `Ok(false)` means the command completed but
/// an estimator failed or did not converge.
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Surface(a) => cmd_surface(&a),
        Command::Montecarlo(a) => cmd_montecarlo(&a),
    }
}

fn seeded(cfg: &RunConfig, seed: Option<u64>) -> SimConfig {
    let sim = cfg.sim_config();
    match seed {
        Some(s) => sim.with_seed(s),
        None => sim,
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<bool> {
    let loaded = LoadedConfig::load(&a.config)?;
    let sim = seeded(&loaded.config, a.seed);
    let traj = simulate(&loaded.config.model()?, &sim)?;
    write_with_header(a.out.as_deref(), &loaded.header(sim.seed), |w| traj.write_csv(w))?;
    let last = traj.values()[traj.values().len() - 1];
    eprintln!("simulated n={} transitions, X_n={last}", traj.transitions());
    Ok(true)
}

fn run_pipeline(model: &ModelSpec, traj: &Trajectory, p: &Pipeline, backend: DerivativeBackend) -> (Vec<EstimatorReport>, bool) {
    let mut reports = Vec::new();
    let base = match estimate(model, traj, &p.base) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", p.base_label());
            return (reports, false);
        }
    };
    let mut ok = base.converged;
    if !base.converged {
        eprintln!("{}: {}", base.name, base.notes);
    }
    let start = base.theta_hat;
    reports.push(base);
    for &r in &p.refinements {
        let label = p.refinement_label(r);
        let refined = match r {
            Refinement::OneStep => one_step(model, traj, start, backend),
            Refinement::Scoring => scoring_step(model, traj, start, backend),
        };
        match refined {
            Ok(mut rep) => {
                rep.name = label;
                reports.push(rep);
            }
            Err(e) => {
                eprintln!("{label}: {e}");
                ok = false;
            }
        }
    }
    (reports, ok)
}

pub fn cmd_estimate(a: &EstimateArgs) -> Result<bool> {
    let loaded = LoadedConfig::load(&a.config)?;
    let cfg = &loaded.config;
    let model = cfg.model()?;
    let sim = seeded(cfg, a.seed);
    let data = if a.simulate { None } else { a.data.as_deref() };
    let traj = load_trajectory(data, &model, &sim)?;
    info!("estimating on {} transitions", traj.transitions());
    let mut reports = Vec::new();
    let mut ok = true;
    for p in cfg.pipelines()? {
        let (r, pipeline_ok) = run_pipeline(&model, &traj, &p, cfg.estimation.backend);
        reports.extend(r);
        ok &= pipeline_ok;
    }
    for r in &reports {
        eprintln!(
            "{}: alpha={} beta={} objective={} evaluations={} converged={} clamps={}",
            r.name, r.theta_hat.alpha, r.theta_hat.beta, r.objective_value, r.evaluations, r.converged, r.clamp_count
        );
    }
    write_with_header(a.out.as_deref(), &loaded.header(sim.seed), |w| write_reports_csv(&reports, w))?;
    Ok(ok)
}

pub fn cmd_surface(a: &SurfaceArgs) -> Result<bool> {
    let loaded = LoadedConfig::load(&a.config)?;
    let cfg = &loaded.config;
    let model = cfg.model()?;
    let sim = seeded(cfg, a.seed);
    let traj = load_trajectory(a.data.as_deref(), &model, &sim)?;
    let est = cfg.estimation_config(cfg.surface_objective()?);
    let grid = loss_surface(|t| objective_value(&model, t, &traj, &est), &cfg.grid())?;
    write_with_header(a.out.as_deref(), &loaded.header(sim.seed), |w| grid.write_csv(w))?;
    if grid.failed > 0 {
        eprintln!("{} of {} cells failed", grid.failed, grid.cells.len());
    }
    match grid.argmin() {
        Some((t, v)) => eprintln!("argmin alpha={} beta={} value={v}", t.alpha, t.beta),
        None => eprintln!("argmin undefined: every cell failed"),
    }
    Ok(true)
}

pub fn cmd_montecarlo(a: &MontecarloArgs) -> Result<bool> {
    let loaded = LoadedConfig::load(&a.config)?;
    let cfg = &loaded.config;
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut exp = cfg.experiment_config(a.replications, workers)?;
    if let Some(s) = a.seed {
        exp.sim = exp.sim.with_seed(s);
    }
    info!("{} replications on {workers} workers", exp.replications);
    let summary = run_experiment(&exp)?;
    let header = loaded.header(exp.sim.seed);
    write_with_header(a.out.as_deref(), &header, |w| summary.write_summary_csv(w))?;
    if let Some(p) = a.per_replication.as_deref().or(cfg.output.replications.as_deref()) {
        write_with_header(Some(p), &header, |w| summary.write_replications_csv(w))?;
    }
    for r in &summary.rows {
        if r.failures > 0 {
            eprintln!("{}: {} of {} replications failed", r.estimator, r.failures, exp.replications);
        }
    }
    Ok(true)
}
