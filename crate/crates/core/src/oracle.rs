//! Centralized reference solver for the DRO reformulation, validation loss,
//! and the cooperation-versus-isolation sweep.
//!
//! The solver is projected gradient descent on `(x, λ) ↦ Ĵ(x, λ)` with
//! Barzilai–Borwein step lengths and backtracking, so `Ĵ` never increases
//! across iterations. It shares no code path with the saddle-point dynamics
//! beyond the closed-form inner maximizer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasible::{FeasibleRegime, ShiftedRegime};
use crate::linalg;
use crate::objectives::Objective;
use crate::problem::{certificate_with_gradient, ProblemInstance};

/// Backtracking halvings allowed per iteration before giving up.
const MAX_BACKTRACKS: usize = 60;
const BB_MIN: f64 = 1e-12;
const BB_MAX: f64 = 1e12;
/// Slack allowed on the monotone-decrease test.
const DESCENT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Initial step length.
    pub step: f64,
    /// Stop once `‖z − Π(z − ∇Ĵ(z))‖` drops to this value.
    pub tol: f64,
    pub max_iter: u64,
    /// Iterates keep `λ ≥ concavity_threshold(x) + margin`.
    pub margin: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            step: 1e-2,
            tol: 1e-9,
            max_iter: 200_000,
            margin: 1e-6,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("step", self.step), ("tol", self.tol), ("margin", self.margin)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("oracle.{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::Config("oracle.max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralizedSolution {
    pub x: Vec<f64>,
    pub lambda: f64,
    /// Certificate `Ĵ(x, λ)`.
    pub value: f64,
    pub iterations: u64,
    /// Projected-gradient norm at the returned point.
    pub residual: f64,
    /// Certificate after every accepted iteration, starting with the initial point.
    #[serde(skip)]
    pub history: Vec<f64>,
}

struct Iterate {
    x: Vec<f64>,
    lambda: f64,
    value: f64,
    grad_x: Vec<f64>,
    grad_lambda: f64,
}

struct Solver<'a> {
    obj: &'a Objective,
    samples: &'a [Vec<f64>],
    epsilon: f64,
    set: ShiftedRegime,
}

impl Solver<'_> {
    fn eval(&self, x: Vec<f64>, lambda: f64) -> Result<Iterate> {
        let e = certificate_with_gradient(self.obj, self.samples, self.epsilon, &x, lambda)?;
        Ok(Iterate {
            x,
            lambda,
            value: e.value,
            grad_x: e.grad_x,
            grad_lambda: e.grad_lambda,
        })
    }

    /// `Π(z − α ∇Ĵ(z))`.
    fn trial(&self, z: &Iterate, alpha: f64) -> Result<(Vec<f64>, f64)> {
        let mut x: Vec<f64> = z.x.iter().zip(&z.grad_x).map(|(v, g)| v - alpha * g).collect();
        let lambda = self.set.project_in_place(&mut x, z.lambda - alpha * z.grad_lambda)?;
        Ok((x, lambda))
    }

    fn residual(&self, z: &Iterate) -> Result<f64> {
        let (x, lambda) = self.trial(z, 1.0)?;
        Ok((linalg::dist_sq(&x, &z.x) + (lambda - z.lambda).powi(2)).sqrt())
    }
}

/// Minimize the certificate over `{λ ≥ concavity_threshold(x) + μ}` (with
/// `λ ≥ 0`) starting from `x = 0`.
pub fn solve_centralized(
    obj: &Objective,
    samples: &[Vec<f64>],
    epsilon: f64,
    cfg: &OracleConfig,
) -> Result<CentralizedSolution> {
    solve_centralized_from(obj, samples, epsilon, cfg, &vec![0.0; obj.dim_x()], None)
}

/// [`solve_centralized`] from a chosen start. A missing `λ₀` defaults to one
/// unit above the feasible bound at `x₀`.
pub fn solve_centralized_from(
    obj: &Objective,
    samples: &[Vec<f64>],
    epsilon: f64,
    cfg: &OracleConfig,
    x0: &[f64],
    lambda0: Option<f64>,
) -> Result<CentralizedSolution> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidData("oracle needs at least one sample".into()));
    }
    crate::error::check_len("oracle start", obj.dim_x(), x0.len())?;
    let solver = Solver {
        obj,
        samples,
        epsilon,
        set: FeasibleRegime::for_objective(obj).with_margin(cfg.margin),
    };
    let mut x = x0.to_vec();
    let l0 = lambda0.unwrap_or(obj.concavity_threshold(x0) + cfg.margin + 1.0);
    let lambda = solver.set.project_in_place(&mut x, l0)?;
    let mut z = solver.eval(x, lambda)?;
    let mut history = vec![z.value];
    let mut alpha = cfg.step;
    let mut residual = solver.residual(&z)?;

    for it in 0..cfg.max_iter {
        if residual <= cfg.tol {
            return Ok(finish(z, it, residual, history));
        }
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let (x, lambda) = solver.trial(&z, alpha)?;
            let dx: Vec<f64> = x.iter().zip(&z.x).map(|(a, b)| a - b).collect();
            let dl = lambda - z.lambda;
            let sq = linalg::norm_sq(&dx) + dl * dl;
            let candidate = solver.eval(x, lambda)?;
            // Sufficient decrease for a projected step of length α.
            let model = z.value + linalg::dot(&z.grad_x, &dx) + z.grad_lambda * dl + sq / (2.0 * alpha);
            if candidate.value <= model + DESCENT_SLACK * z.value.abs().max(1.0)
                && candidate.value <= z.value + DESCENT_SLACK * z.value.abs().max(1.0)
            {
                accepted = Some((candidate, dx, dl));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, dx, dl)) = accepted else {
            // No decrease available at machine precision: z is as good as it gets.
            log::debug!("oracle backtracking stalled at iteration {it}, residual {residual:e}");
            if residual <= cfg.tol.sqrt() {
                return Ok(finish(z, it, residual, history));
            }
            return Err(Error::MaxIterations {
                iterations: it,
                residual,
            });
        };
        // Barzilai–Borwein length from the accepted displacement.
        let dgx: Vec<f64> = next.grad_x.iter().zip(&z.grad_x).map(|(a, b)| a - b).collect();
        let dgl = next.grad_lambda - z.grad_lambda;
        let sy = linalg::dot(&dx, &dgx) + dl * dgl;
        let ss = linalg::norm_sq(&dx) + dl * dl;
        alpha = if sy > 0.0 { (ss / sy).clamp(BB_MIN, BB_MAX) } else { (alpha * 2.0).min(BB_MAX) };
        z = next;
        history.push(z.value);
        residual = solver.residual(&z)?;
    }
    if residual <= cfg.tol {
        return Ok(finish(z, cfg.max_iter, residual, history));
    }
    Err(Error::MaxIterations {
        iterations: cfg.max_iter,
        residual,
    })
}

fn finish(z: Iterate, iterations: u64, residual: f64, history: Vec<f64>) -> CentralizedSolution {
    CentralizedSolution {
        x: z.x,
        lambda: z.lambda,
        value: z.value,
        iterations,
        residual,
        history,
    }
}

/// Mean of `f(x, ξ)` over the validation samples.
pub fn validation_loss(obj: &Objective, x: &[f64], samples: &[Vec<f64>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidData("validation set is empty".into()));
    }
    let mut total = 0.0;
    for s in samples {
        total += obj.f(x, s)?;
    }
    Ok(total / samples.len() as f64)
}

/// Relative benefit of pooling the first `size` agents' data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CooperationRow {
    pub size: usize,
    /// Mean of `R(size)` in percent over the validation draws.
    pub r_mean: f64,
    /// Sample standard deviation of `R(size)` (zero for a single draw).
    pub r_std: f64,
    pub x: Vec<f64>,
    pub lambda: f64,
    /// Mean validation loss of this group's solution.
    pub f_val_mean: f64,
}

/// `R(i) = (f_val(x¹) − f_val(xⁱ)) / f_val(x¹) · 100`, where `xⁱ` solves the
/// centralized problem on the pooled samples of agents `1..=i`. Validation
/// set `r` is `draw(seed + r)`; all sizes share the same draws.
pub fn cooperation_benefit<F>(
    p: &ProblemInstance,
    sizes: &[usize],
    runs: usize,
    seed: u64,
    draw: F,
    cfg: &OracleConfig,
) -> Result<Vec<CooperationRow>>
where
    F: Fn(u64) -> Vec<Vec<f64>> + Sync,
{
    if runs == 0 {
        return Err(Error::Config("sweep.runs must be >= 1".into()));
    }
    if sizes.iter().any(|&s| s == 0 || s > p.n()) {
        return Err(Error::Config(format!(
            "sweep sizes must lie in 1..={}, got {sizes:?}",
            p.n()
        )));
    }
    let mut all_sizes = vec![1];
    all_sizes.extend(sizes.iter().copied().filter(|&s| s != 1));
    let solutions: Vec<CentralizedSolution> = all_sizes
        .par_iter()
        .map(|&i| {
            let pooled = p.data().pooled_first_agents(i);
            solve_centralized(p.objective(), &pooled, p.epsilon(), cfg)
        })
        .collect::<Result<_>>()?;

    // losses[r][s]: validation loss of solution s on draw r.
    let losses: Vec<Vec<f64>> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let val = draw(seed.wrapping_add(r));
            solutions
                .iter()
                .map(|s| validation_loss(p.objective(), &s.x, &val))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    Ok(sizes
        .iter()
        .map(|&size| {
            let idx = if size == 1 { 0 } else { all_sizes.iter().position(|&s| s == size).unwrap() };
            let rs: Vec<f64> = losses
                .iter()
                .map(|row| {
                    if idx == 0 {
                        0.0
                    } else {
                        (row[0] - row[idx]) / row[0] * 100.0
                    }
                })
                .collect();
            let (r_mean, r_std) = mean_std(&rs);
            let f_val_mean = losses.iter().map(|row| row[idx]).sum::<f64>() / runs as f64;
            CooperationRow {
                size,
                r_mean,
                r_std,
                x: solutions[idx].x.clone(),
                lambda: solutions[idx].lambda,
                f_val_mean,
            }
        })
        .collect())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
