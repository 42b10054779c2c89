//! Experiment configs, synthetic regression data and artifact output.
//!
//! A config is one JSON document:
//!
//! ```json
//! {
//!   "run_id": "ring10",
//!   "graph": {"n": 10, "edges": [[1, 2, 1.0], [2, 3, 1.0]]},
//!   "objective": {"kind": "least_squares", "params": {"a": 1.0, "dim": 5}},
//!   "data": {"source": "generator", "weights": [1, 4, 3, 2], "noise": 1.0, "per_agent": 30},
//!   "epsilon": 0.05,
//!   "integrator": {"step": 0.1, "max_steps": 2000000},
//!   "oracle": {"tol": 1e-9},
//!   "init": {"x": [0, 5], "lambda": [30, 80]},
//!   "seeds": {"data": 1, "init": 2, "validation": 3},
//!   "validation_size": 10000,
//!   "sweep": {"sizes": [1, 2, 5, 10], "runs": 100},
//!   "validate": {"x": [1, 4, 3, 2, 0]}
//! }
//! ```
//!
//! Unknown keys are rejected at every level. Vertex and owner ids are
//! 1-indexed.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, IntegratorConfig, RunOptions, StopReason};
use crate::error::{Error, Result};
use crate::graph::{GraphSpec, NetworkGraph};
use crate::linalg;
use crate::objectives::{Objective, ObjectiveSpec};
use crate::oracle::{self, CooperationRow, OracleConfig};
use crate::problem::{extract, PartitionedDataset, ProblemInstance, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Run,
    Oracle,
    Sweep,
    Validate,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Oracle => "oracle",
            Mode::Sweep => "sweep",
            Mode::Validate => "validate",
        }
    }
}

/// Linear model `y = weightsᵀ w + v` with `w ~ N(0, I)` and `v ~ U[−noise, noise]`.
/// Each sample is `(w; y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionGenerator {
    pub weights: Vec<f64>,
    pub noise: f64,
    pub per_agent: usize,
}

impl Default for RegressionGenerator {
    fn default() -> Self {
        Self {
            weights: vec![1.0, 4.0, 3.0, 2.0],
            noise: 1.0,
            per_agent: 30,
        }
    }
}

impl RegressionGenerator {
    pub fn dim(&self) -> usize {
        self.weights.len() + 1
    }

    fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Config("data.weights must be nonempty".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("data.noise must be >= 0, got {}", self.noise)));
        }
        if self.per_agent == 0 {
            return Err(Error::Config("data.per_agent must be >= 1".into()));
        }
        Ok(())
    }

    /// `count` samples from a ChaCha8 stream seeded with `seed`.
    pub fn sample_set(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = BoxMuller::default();
        (0..count).map(|_| self.draw(&mut rng, &mut normal)).collect()
    }

    fn draw(&self, rng: &mut ChaCha8Rng, normal: &mut BoxMuller) -> Vec<f64> {
        let mut s: Vec<f64> = self.weights.iter().map(|_| normal.next(rng)).collect();
        let v = if self.noise > 0.0 {
            rng.random_range(-self.noise..=self.noise)
        } else {
            0.0
        };
        s.push(linalg::dot(&self.weights, &s) + v);
        s
    }
}

/// Standard normals from uniform pairs: `u₁ ∈ (0, 1]`, `u₂ ∈ [0, 1)`,
/// `z = √(−2 ln u₁) (cos 2πu₂, sin 2πu₂)`. The sine half is kept for the
/// next call.
#[derive(Debug, Default)]
struct BoxMuller {
    spare: Option<f64>,
}

impl BoxMuller {
    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - rng.random::<f64>();
        let u2 = rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// `n_agents · gen.per_agent` samples in contiguous ownership blocks.
pub fn generate_regression_data(
    gen: &RegressionGenerator,
    n_agents: usize,
    seed: u64,
) -> Result<PartitionedDataset> {
    gen.validate()?;
    if n_agents == 0 {
        return Err(Error::Config("need at least one agent".into()));
    }
    let samples = gen.sample_set(n_agents * gen.per_agent, seed);
    PartitionedDataset::equal_split(samples, n_agents)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSpec {
    Generator(RegressionGenerator),
    /// CSV with `m + 1` columns: sample coordinates then the 1-indexed owner.
    /// A non-numeric first row is treated as a header. Relative paths are
    /// resolved against the config file's directory.
    File { path: PathBuf },
    /// Owners are 1-indexed; without them samples are split into equal
    /// contiguous blocks.
    Inline {
        samples: Vec<Vec<f64>>,
        #[serde(default)]
        owners: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitBox {
    /// Every `x_i` component is drawn uniformly from `[x[0], x[1]]`.
    pub x: [f64; 2],
    pub lambda: [f64; 2],
}

impl Default for InitBox {
    fn default() -> Self {
        Self {
            x: [0.0, 5.0],
            lambda: [30.0, 80.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub validation: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 1,
            init: 2,
            validation: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Group sizes; all of `1..=n` when absent.
    pub sizes: Option<Vec<usize>>,
    /// Validation redraws; draw `r` uses seed `seeds.validation + r`.
    pub runs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: None,
            runs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub x: Vec<f64>,
}

fn default_validation_size() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run_id: Option<String>,
    /// Default mode when none is given on the command line.
    #[serde(default)]
    pub mode: Option<Mode>,
    pub graph: GraphSpec,
    pub objective: ObjectiveSpec,
    pub data: DataSpec,
    pub epsilon: f64,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub init: InitBox,
    #[serde(default)]
    pub seeds: Seeds,
    /// Size of fresh validation sets drawn from the generator.
    #[serde(default = "default_validation_size")]
    pub validation_size: usize,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub validate: Option<ValidateConfig>,
    /// Add `x_v`, `λ_v` columns to the trajectory CSV.
    #[serde(default)]
    pub record_state: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a config file; a relative data path is rebased onto the
    /// file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let DataSpec::File { path: data } = &mut cfg.data {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        self.integrator.validate()?;
        self.oracle.validate()?;
        if !(self.init.x[0] <= self.init.x[1]) || !(self.init.lambda[0] <= self.init.lambda[1]) {
            return Err(Error::Config("init ranges must satisfy low <= high".into()));
        }
        if self.validation_size == 0 {
            return Err(Error::Config("validation_size must be >= 1".into()));
        }
        if let DataSpec::Generator(g) = &self.data {
            g.validate()?;
        }
        Ok(())
    }

    fn dataset(&self) -> Result<PartitionedDataset> {
        let n = self.graph.n;
        match &self.data {
            DataSpec::Generator(g) => generate_regression_data(g, n, self.seeds.data),
            DataSpec::File { path } => read_dataset_csv(path, n),
            DataSpec::Inline { samples, owners } => match owners {
                Some(o) => PartitionedDataset::new(samples.clone(), one_to_zero_indexed(o)?, n),
                None => PartitionedDataset::equal_split(samples.clone(), n),
            },
        }
    }

    pub fn build_problem(&self) -> Result<ProblemInstance> {
        let graph = NetworkGraph::from_one_indexed(&self.graph)?;
        let objective = Objective::from_spec(&self.objective)?;
        ProblemInstance::new(graph, self.dataset()?, objective, self.epsilon)
    }

    /// Random initial state: `x_i`, `λ_i` uniform in the init box, `ν = η = 0`,
    /// `ξ^k = 0`.
    pub fn initial_state(&self, p: &ProblemInstance) -> SystemState {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seeds.init);
        let mut s = p.zero_state();
        let [xl, xh] = self.init.x;
        let [ll, lh] = self.init.lambda;
        for v in &mut s.x {
            *v = rng.random_range(xl..=xh);
        }
        for v in &mut s.lambda {
            *v = rng.random_range(ll..=lh);
        }
        s
    }

    /// Fresh validation samples for redraw `offset`, or the training set when
    /// the data does not come from a generator.
    pub fn validation_set(&self, p: &ProblemInstance, offset: u64) -> Vec<Vec<f64>> {
        match &self.data {
            DataSpec::Generator(g) => {
                g.sample_set(self.validation_size, self.seeds.validation.wrapping_add(offset))
            }
            _ => p.data().samples().to_vec(),
        }
    }
}

fn one_to_zero_indexed(owners: &[usize]) -> Result<Vec<usize>> {
    owners
        .iter()
        .map(|&o| {
            o.checked_sub(1)
                .ok_or_else(|| Error::InvalidData("owner ids are 1-indexed; got 0".into()))
        })
        .collect()
}

fn read_dataset_csv(path: &Path, n_agents: usize) -> Result<PartitionedDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("data.path {}: {e}", path.display())))?;
    let mut samples = Vec::new();
    let mut owners = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if row == 0 => continue,
            Err(e) => {
                return Err(Error::InvalidData(format!("{} row {}: {e}", path.display(), row + 1)))
            }
        };
        if values.len() < 2 {
            return Err(Error::InvalidData(format!(
                "{} row {}: need sample columns and an owner id",
                path.display(),
                row + 1
            )));
        }
        let owner = values[values.len() - 1];
        if owner.fract() != 0.0 || owner < 1.0 {
            return Err(Error::InvalidData(format!(
                "{} row {}: owner id {owner} is not a positive integer",
                path.display(),
                row + 1
            )));
        }
        owners.push(owner as usize - 1);
        samples.push(values[..values.len() - 1].to_vec());
    }
    PartitionedDataset::new(samples, owners, n_agents)
}

/// Result summary, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mode: Mode,
    pub run_id: String,
    pub stop_reason: StopReason,
    pub x_bar: Vec<f64>,
    pub lambda_bar: Option<f64>,
    /// `max(‖(L ⊗ I)x_v‖, ‖Lλ_v‖)` for distributed runs; zero for centralized modes.
    pub consensus_residual: Option<f64>,
    /// Largest deviation of any agent from the average.
    pub max_deviation: Option<f64>,
    /// Projected vector-field norm (distributed) or projected-gradient norm (oracle).
    pub vf_norm: Option<f64>,
    pub certificate: Option<f64>,
    pub wall_steps: u64,
    pub validation_loss: Option<f64>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<CooperationRow>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summary: Summary,
    pub out_dir: PathBuf,
}

impl ExperimentReport {
    /// 0 for converged runs, 1 for `MaxSteps` and `Diverged`.
    pub fn exit_code(&self) -> i32 {
        match self.summary.stop_reason {
            StopReason::Converged => 0,
            StopReason::MaxSteps | StopReason::Diverged => 1,
        }
    }
}

/// Execute `mode` and write artifacts under `out_root/{run_id}/`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    mode: Mode,
    run_id: &str,
    out_root: &Path,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let p = cfg.build_problem()?;
    let out_dir = out_root.join(run_id);
    fs::create_dir_all(&out_dir)?;
    let mut echo = cfg.clone();
    echo.mode = Some(mode);
    echo.run_id = Some(run_id.to_string());
    fs::write(out_dir.join("config_echo.json"), serde_json::to_string_pretty(&echo)? + "\n")?;

    let summary = match mode {
        Mode::Run => run_mode(cfg, &p, run_id, &out_dir)?,
        Mode::Oracle => oracle_mode(cfg, &p, run_id)?,
        Mode::Sweep => sweep_mode(cfg, &p, run_id, &out_dir)?,
        Mode::Validate => validate_mode(cfg, &p, run_id)?,
    };
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(ExperimentReport { summary, out_dir })
}

fn certificate_or_warn(p: &ProblemInstance, x: &[f64], lambda: f64, warnings: &mut Vec<String>) -> Option<f64> {
    match p.certificate(x, lambda) {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("certificate unavailable: {e}"));
            None
        }
    }
}

fn run_mode(cfg: &ExperimentConfig, p: &ProblemInstance, run_id: &str, out_dir: &Path) -> Result<Summary> {
    let s0 = cfg.initial_state(p);
    let out = dynamics::run_with(
        p,
        &s0,
        &cfg.integrator,
        RunOptions {
            reference: None,
            record_state: cfg.record_state,
        },
    )?;
    let file = fs::File::create(out_dir.join("trajectory.csv"))?;
    out.diagnostics.write_csv(std::io::BufWriter::new(file))?;

    let ex = extract(&out.state.x, &out.state.lambda)?;
    let last = out.diagnostics.last().expect("run records its final state");
    let mut warnings = out.warnings.clone();
    let certificate = certificate_or_warn(p, &ex.x_bar, ex.lambda_bar, &mut warnings);
    let validation = cfg.validation_set(p, 0);
    let validation_loss = Some(oracle::validation_loss(p.objective(), &ex.x_bar, &validation)?);
    Ok(Summary {
        mode: Mode::Run,
        run_id: run_id.to_string(),
        stop_reason: out.stop_reason,
        x_bar: ex.x_bar,
        lambda_bar: Some(ex.lambda_bar),
        consensus_residual: Some(last.consensus_x.max(last.consensus_lambda)),
        max_deviation: Some(ex.residual),
        vf_norm: Some(out.vf_norm),
        certificate,
        wall_steps: out.steps,
        validation_loss,
        warnings,
        sweep: None,
    })
}

fn oracle_mode(cfg: &ExperimentConfig, p: &ProblemInstance, run_id: &str) -> Result<Summary> {
    let (stop_reason, sol) =
        match oracle::solve_centralized(p.objective(), p.data().samples(), p.epsilon(), &cfg.oracle) {
            Ok(sol) => (StopReason::Converged, sol),
            Err(Error::MaxIterations { iterations, residual }) => {
                return Ok(Summary {
                    mode: Mode::Oracle,
                    run_id: run_id.to_string(),
                    stop_reason: StopReason::MaxSteps,
                    x_bar: Vec::new(),
                    lambda_bar: None,
                    consensus_residual: None,
                    max_deviation: None,
                    vf_norm: Some(residual),
                    certificate: None,
                    wall_steps: iterations,
                    validation_loss: None,
                    warnings: vec!["oracle hit its iteration limit".into()],
                    sweep: None,
                })
            }
            Err(e) => return Err(e),
        };
    let validation = cfg.validation_set(p, 0);
    Ok(Summary {
        mode: Mode::Oracle,
        run_id: run_id.to_string(),
        stop_reason,
        validation_loss: Some(oracle::validation_loss(p.objective(), &sol.x, &validation)?),
        x_bar: sol.x,
        lambda_bar: Some(sol.lambda),
        consensus_residual: Some(0.0),
        max_deviation: Some(0.0),
        vf_norm: Some(sol.residual),
        certificate: Some(sol.value),
        wall_steps: sol.iterations,
        warnings: Vec::new(),
        sweep: None,
    })
}

fn sweep_mode(cfg: &ExperimentConfig, p: &ProblemInstance, run_id: &str, out_dir: &Path) -> Result<Summary> {
    let sizes = cfg.sweep.sizes.clone().unwrap_or_else(|| (1..=p.n()).collect());
    let rows = oracle::cooperation_benefit(
        p,
        &sizes,
        cfg.sweep.runs,
        0,
        |r| cfg.validation_set(p, r),
        &cfg.oracle,
    )?;
    let mut w = csv::Writer::from_path(out_dir.join("sweep.csv"))?;
    w.write_record(["size", "R_mean", "R_std"])?;
    for r in &rows {
        w.write_record([r.size.to_string(), r.r_mean.to_string(), r.r_std.to_string()])?;
    }
    w.flush()?;
    let mut warnings = Vec::new();
    if !matches!(cfg.data, DataSpec::Generator(_)) {
        warnings.push("data has no generator; every sweep run validates on the training set".into());
    }
    let largest = rows.iter().max_by_key(|r| r.size).expect("sizes nonempty");
    let certificate = certificate_or_warn(p, &largest.x, largest.lambda, &mut warnings);
    Ok(Summary {
        mode: Mode::Sweep,
        run_id: run_id.to_string(),
        stop_reason: StopReason::Converged,
        x_bar: largest.x.clone(),
        lambda_bar: Some(largest.lambda),
        consensus_residual: Some(0.0),
        max_deviation: Some(0.0),
        vf_norm: None,
        certificate,
        wall_steps: 0,
        validation_loss: Some(largest.f_val_mean),
        warnings,
        sweep: Some(rows),
    })
}

fn validate_mode(cfg: &ExperimentConfig, p: &ProblemInstance, run_id: &str) -> Result<Summary> {
    let x = cfg
        .validate
        .as_ref()
        .map(|v| v.x.clone())
        .ok_or_else(|| Error::Config("mode validate needs a \"validate\": {\"x\": [...]} section".into()))?;
    if x.len() != p.d() {
        return Err(Error::Config(format!(
            "validate.x has length {}, the objective expects {}",
            x.len(),
            p.d()
        )));
    }
    let validation = cfg.validation_set(p, 0);
    Ok(Summary {
        mode: Mode::Validate,
        run_id: run_id.to_string(),
        stop_reason: StopReason::Converged,
        validation_loss: Some(oracle::validation_loss(p.objective(), &x, &validation)?),
        x_bar: x,
        lambda_bar: None,
        consensus_residual: None,
        max_deviation: None,
        vf_norm: None,
        certificate: None,
        wall_steps: 0,
        warnings: Vec::new(),
        sweep: None,
    })
}

impl Error {
    /// Errors caused by the experiment description rather than the solver.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::InvalidGraph(_)
                | Error::InvalidObjective(_)
                | Error::InvalidData(_)
                | Error::InvalidProblem(_)
                | Error::DimensionMismatch { .. }
        )
    }
}
