//! Projected saddle-point dynamics on the augmented Lagrangian and a
//! fixed-step projected Euler integrator.
//!
//! Agent `i` updates only its own block `(x_i, λ_i, ν_i, η_i, {ξ^k}_{k∈K_i})`
//! from its samples and a snapshot of its neighbors' previous-step
//! `(x_j, λ_j, ν_j, η_j)`:
//!
//! ```text
//! ẋ_i  = −(1/N) Σ_{k∈K_i} ∇_x g_k − Σ_j a_ij ((η_i − η_j) + (x_i − x_j))
//! λ̇_i  = −ε²/n − (1/N) Σ_{k∈K_i} ∇_λ g_k − Σ_j a_ij ((ν_i − ν_j) + (λ_i − λ_j))
//! ν̇_i  = Σ_j a_ij (λ_i − λ_j)
//! η̇_i  = Σ_j a_ij (x_i − x_j)
//! ξ̇^k  = (1/N) ∇_ξ g_k(x_i, λ_i, ξ^k),  k ∈ K_i
//! ```
//!
//! The primal block is projected onto `C` after each Euler step; the dual
//! and `ξ` blocks are not projected. The `ξ^k` never leave their agent.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasible::DEFAULT_CONTAINS_TOL;
use crate::linalg;
use crate::problem::{ProblemInstance, SystemState};

/// Step used by [`equilibrium_residual`] to resolve the projected field.
const RESIDUAL_STEP: f64 = 1e-7;

/// Interior margin below which a converged run is flagged.
pub const INTERIOR_WARNING_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    /// Euler step `h`.
    pub step: f64,
    pub max_steps: u64,
    /// Stop once the projected field norm drops to this value.
    pub vf_tol: f64,
    pub consensus_tol: f64,
    /// State-norm ceiling; exceeding it aborts the run.
    pub divergence_bound: f64,
    pub record_every: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            max_steps: 10_000_000,
            vf_tol: 1e-6,
            consensus_tol: 1e-4,
            divergence_bound: 1e9,
            record_every: 1000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step", self.step),
            ("vf_tol", self.vf_tol),
            ("consensus_tol", self.consensus_tol),
            ("divergence_bound", self.divergence_bound),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("integrator.{name} must be positive, got {v}")));
            }
        }
        if self.record_every == 0 {
            return Err(Error::Config("integrator.record_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxSteps,
    Diverged,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxSteps => "max_steps",
            StopReason::Diverged => "diverged",
        }
    }
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRecord {
    pub step: u64,
    pub t: f64,
    /// Norm of the projected vector field.
    pub vf_norm: f64,
    /// `‖(L ⊗ I_d) x_v‖`
    pub consensus_x: f64,
    /// `‖L λ_v‖`
    pub consensus_lambda: f64,
    pub lasalle_v: Option<f64>,
    /// `min_i (λ_i − concavity_threshold(x_i))`
    pub interior_margin: f64,
    /// `(x_v, λ_v)` when state recording is on.
    pub primal: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryDiagnostics {
    pub records: Vec<DiagnosticRecord>,
}

impl TrajectoryDiagnostics {
    pub fn last(&self) -> Option<&DiagnosticRecord> {
        self.records.last()
    }

    /// CSV with header `step,t,vf_norm,consensus_x,consensus_lambda,lasalle_V,interior_margin`
    /// followed by `x_v[..]` and `lambda_v[..]` columns when states were
    /// recorded. A missing LaSalle value is an empty field.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let state_dims = self
            .records
            .first()
            .and_then(|r| r.primal.as_ref())
            .map(|(x, l)| (x.len(), l.len()));
        let mut header: Vec<String> = [
            "step",
            "t",
            "vf_norm",
            "consensus_x",
            "consensus_lambda",
            "lasalle_V",
            "interior_margin",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        if let Some((nx, nl)) = state_dims {
            header.extend((0..nx).map(|i| format!("x_v[{i}]")));
            header.extend((0..nl).map(|i| format!("lambda_v[{i}]")));
        }
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.step.to_string(),
                r.t.to_string(),
                r.vf_norm.to_string(),
                r.consensus_x.to_string(),
                r.consensus_lambda.to_string(),
                r.lasalle_v.map(|v| v.to_string()).unwrap_or_default(),
                r.interior_margin.to_string(),
            ];
            if let (Some((x, l)), Some(_)) = (&r.primal, state_dims) {
                row.extend(x.iter().chain(l).map(|v| v.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Last finite state reached.
    pub state: SystemState,
    pub diagnostics: TrajectoryDiagnostics,
    pub stop_reason: StopReason,
    pub steps: u64,
    /// Projected field norm at `state`.
    pub vf_norm: f64,
    pub warnings: Vec<String>,
}

/// Raw (pre-projection) saddle-point field at `s`, laid out like the state.
pub fn vector_field(p: &ProblemInstance, s: &SystemState) -> Result<SystemState> {
    p.check_state(s)?;
    let mut out = p.zero_state();
    FieldWorkspace::new(p).eval(p, s, &mut out);
    Ok(out)
}

/// Scratch buffers for field evaluation.
struct FieldWorkspace {
    gx: Vec<f64>,
    tmp_d: Vec<f64>,
    tmp_m: Vec<f64>,
}

impl FieldWorkspace {
    fn new(p: &ProblemInstance) -> Self {
        Self {
            gx: vec![0.0; p.d()],
            tmp_d: vec![0.0; p.d()],
            tmp_m: vec![0.0; p.m()],
        }
    }

    /// Overwrites every block of `out`. Per-agent sums run in a fixed order
    /// (samples by index, neighbors by insertion order).
    fn eval(&mut self, p: &ProblemInstance, s: &SystemState, out: &mut SystemState) {
        let (n, d, m) = (p.n(), p.d(), p.m());
        let inv_n_samples = 1.0 / p.num_samples() as f64;
        let eps2_over_n = p.epsilon() * p.epsilon() / n as f64;
        let obj = p.objective();
        let data = p.data();
        let graph = p.graph();

        for i in 0..n {
            let xi_agent = &s.x[i * d..(i + 1) * d];
            let lambda_i = s.lambda[i];
            self.gx.iter_mut().for_each(|v| *v = 0.0);
            let mut g_lambda = 0.0;
            for &k in data.owned_by(i) {
                let sample = data.sample(k);
                let xik = &s.xi[k * m..(k + 1) * m];
                obj.grad_x_into(xi_agent, xik, &mut self.tmp_d);
                linalg::axpy(1.0, &self.tmp_d, &mut self.gx);
                g_lambda -= linalg::dist_sq(xik, sample);
                obj.grad_xi_into(xi_agent, xik, &mut self.tmp_m);
                let dxi = &mut out.xi[k * m..(k + 1) * m];
                for (((o, g), a), b) in dxi.iter_mut().zip(&self.tmp_m).zip(xik).zip(sample) {
                    *o = (g - 2.0 * lambda_i * (a - b)) * inv_n_samples;
                }
            }

            let dx = &mut out.x[i * d..(i + 1) * d];
            for (o, g) in dx.iter_mut().zip(&self.gx) {
                *o = -g * inv_n_samples;
            }
            let deta = &mut out.eta[i * d..(i + 1) * d];
            deta.iter_mut().for_each(|v| *v = 0.0);
            let mut lap_lambda = 0.0;
            let mut lap_nu = 0.0;
            for &(j, a) in graph.neighbors(i) {
                lap_lambda += a * (lambda_i - s.lambda[j]);
                lap_nu += a * (s.nu[i] - s.nu[j]);
                for c in 0..d {
                    let diff_x = s.x[i * d + c] - s.x[j * d + c];
                    let diff_eta = s.eta[i * d + c] - s.eta[j * d + c];
                    dx[c] -= a * (diff_eta + diff_x);
                    deta[c] += a * diff_x;
                }
            }
            out.lambda[i] = -eps2_over_n - g_lambda * inv_n_samples - lap_nu - lap_lambda;
            out.nu[i] = lap_lambda;
        }
    }
}

/// Integrator state reused across steps.
struct Stepper {
    ws: FieldWorkspace,
    field: SystemState,
    next: SystemState,
}

impl Stepper {
    fn new(p: &ProblemInstance) -> Self {
        Self {
            ws: FieldWorkspace::new(p),
            field: p.zero_state(),
            next: p.zero_state(),
        }
    }

    /// Fill `self.next` with the projected Euler step from `s` and return the
    /// projected field norm `‖(next − s) / h‖`.
    fn advance(&mut self, p: &ProblemInstance, s: &SystemState, h: f64) -> Result<f64> {
        self.ws.eval(p, s, &mut self.field);
        let d = p.d();
        let regime = p.regime();
        let mut sq = 0.0;
        for i in 0..p.n() {
            let xs = &mut self.next.x[i * d..(i + 1) * d];
            for ((o, x), f) in xs.iter_mut().zip(&s.x[i * d..(i + 1) * d]).zip(&self.field.x[i * d..(i + 1) * d]) {
                *o = x + h * f;
            }
            let lambda = regime.project_in_place(xs, s.lambda[i] + h * self.field.lambda[i])?;
            self.next.lambda[i] = lambda;
            let dl = (lambda - s.lambda[i]) / h;
            sq += dl * dl;
            for (o, x) in xs.iter().zip(&s.x[i * d..(i + 1) * d]) {
                let dx = (o - x) / h;
                sq += dx * dx;
            }
        }
        for (dst, (src, f)) in [
            (&mut self.next.nu, (&s.nu, &self.field.nu)),
            (&mut self.next.eta, (&s.eta, &self.field.eta)),
            (&mut self.next.xi, (&s.xi, &self.field.xi)),
        ] {
            for ((o, v), g) in dst.iter_mut().zip(src.iter()).zip(f.iter()) {
                *o = v + h * g;
                sq += g * g;
            }
        }
        Ok(sq.sqrt())
    }
}

fn check_divergence(s: &SystemState, bound: f64, step: u64) -> Result<()> {
    let norm = s.norm();
    if !norm.is_finite() || norm > bound {
        return Err(Error::Diverged { step, norm });
    }
    Ok(())
}

/// One projected Euler step of length `cfg.step`.
pub fn step(p: &ProblemInstance, s: &SystemState, cfg: &IntegratorConfig) -> Result<SystemState> {
    p.check_state(s)?;
    let mut stepper = Stepper::new(p);
    stepper.advance(p, s, cfg.step)?;
    check_divergence(&stepper.next, cfg.divergence_bound, 1)?;
    Ok(stepper.next)
}

/// `V = ½ ‖s − reference‖²` over all blocks.
pub fn lasalle_value(s: &SystemState, reference: &SystemState) -> Result<f64> {
    for (a, b, ctx) in [
        (s.x.len(), reference.x.len(), "lasalle x"),
        (s.lambda.len(), reference.lambda.len(), "lasalle lambda"),
        (s.nu.len(), reference.nu.len(), "lasalle nu"),
        (s.eta.len(), reference.eta.len(), "lasalle eta"),
        (s.xi.len(), reference.xi.len(), "lasalle xi"),
    ] {
        crate::error::check_len(ctx, b, a)?;
    }
    Ok(s.half_dist_sq(reference))
}

/// Norm of the projected field, with the primal projection resolved at a
/// tiny step. Zero exactly at saddle points.
pub fn equilibrium_residual(p: &ProblemInstance, s: &SystemState) -> Result<f64> {
    p.check_state(s)?;
    let mut stepper = Stepper::new(p);
    stepper.advance(p, s, RESIDUAL_STEP)
}

fn interior_margin(p: &ProblemInstance, s: &SystemState) -> f64 {
    let d = p.d();
    (0..p.n())
        .map(|i| s.lambda[i] - p.objective().concavity_threshold(&s.x[i * d..(i + 1) * d]))
        .fold(f64::INFINITY, f64::min)
}

fn record(
    p: &ProblemInstance,
    s: &SystemState,
    step: u64,
    h: f64,
    vf_norm: f64,
    reference: Option<&SystemState>,
    with_state: bool,
) -> Result<DiagnosticRecord> {
    let l = p.laplacian();
    Ok(DiagnosticRecord {
        step,
        t: step as f64 * h,
        vf_norm,
        consensus_x: linalg::norm(&l.apply_blockwise(&s.x, p.d())?),
        consensus_lambda: linalg::norm(&l.apply_blockwise(&s.lambda, 1)?),
        lasalle_v: reference.map(|r| s.half_dist_sq(r)),
        interior_margin: interior_margin(p, s),
        primal: with_state.then(|| (s.x.clone(), s.lambda.clone())),
    })
}

/// Options for [`run_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    pub reference: Option<&'a SystemState>,
    /// Record `(x_v, λ_v)` in every diagnostic row.
    pub record_state: bool,
}

/// Integrate from `s0` until the projected field norm reaches `cfg.vf_tol`,
/// `cfg.max_steps` steps have been taken, or the state leaves the
/// divergence bound. A primal block outside `C` is projected on intake.
pub fn run(
    p: &ProblemInstance,
    s0: &SystemState,
    cfg: &IntegratorConfig,
    reference: Option<&SystemState>,
) -> Result<RunOutcome> {
    run_with(
        p,
        s0,
        cfg,
        RunOptions {
            reference,
            record_state: false,
        },
    )
}

pub fn run_with(
    p: &ProblemInstance,
    s0: &SystemState,
    cfg: &IntegratorConfig,
    opts: RunOptions<'_>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    p.check_state(s0)?;
    if let Some(r) = opts.reference {
        p.check_state(r)?;
    }
    let h = cfg.step;
    let mut state = s0.clone();
    let regime = p.regime();
    let d = p.d();
    let mut moved = 0;
    for i in 0..p.n() {
        let xs = &mut state.x[i * d..(i + 1) * d];
        if !regime.contains(xs, state.lambda[i], 0.0) {
            state.lambda[i] = regime.project_in_place(xs, state.lambda[i])?;
            moved += 1;
        }
    }
    if moved > 0 {
        log::info!("projected {moved} initial agent states onto the feasible set");
    }
    check_divergence(&state, cfg.divergence_bound, 0)?;

    let mut stepper = Stepper::new(p);
    let mut diagnostics = TrajectoryDiagnostics::default();
    let mut steps = 0u64;
    let (stop_reason, vf_norm) = loop {
        let vf = stepper.advance(p, &state, h)?;
        let converged = vf <= cfg.vf_tol;
        let finished = converged || steps >= cfg.max_steps;
        if steps % cfg.record_every == 0 || finished {
            diagnostics.records.push(record(
                p,
                &state,
                steps,
                h,
                vf,
                opts.reference,
                opts.record_state,
            )?);
        }
        if converged {
            break (StopReason::Converged, vf);
        }
        if steps >= cfg.max_steps {
            break (StopReason::MaxSteps, vf);
        }
        steps += 1;
        if let Err(Error::Diverged { norm, .. }) =
            check_divergence(&stepper.next, cfg.divergence_bound, steps)
        {
            log::warn!("trajectory diverged at step {steps} (state norm {norm:e})");
            break (StopReason::Diverged, vf);
        }
        std::mem::swap(&mut state, &mut stepper.next);
    };

    let mut warnings = Vec::new();
    if stop_reason == StopReason::Converged {
        let margin = interior_margin(p, &state);
        if margin < INTERIOR_WARNING_MARGIN {
            let msg = format!(
                "converged with interior margin {margin:e}; the saddle point may sit on the boundary of the feasible set"
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let last = diagnostics.last().expect("final record");
        if last.consensus_x > cfg.consensus_tol || last.consensus_lambda > cfg.consensus_tol {
            let msg = format!(
                "converged but consensus residuals ({:e}, {:e}) exceed consensus_tol {:e}",
                last.consensus_x, last.consensus_lambda, cfg.consensus_tol
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    debug_assert!((0..p.n()).all(|i| regime.contains(
        &state.x[i * d..(i + 1) * d],
        state.lambda[i],
        DEFAULT_CONTAINS_TOL
    )));

    Ok(RunOutcome {
        state,
        diagnostics,
        stop_reason,
        steps,
        vf_norm,
        warnings,
    })
}
