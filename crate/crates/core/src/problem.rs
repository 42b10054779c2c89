//! The distributed DRO instance and the functions evaluated on it.
//!
//! Each agent `i` keeps a copy `(x_i, λ_i)` of the decision and multiplier.
//! Agreement is imposed through the graph Laplacian, and the inner
//! maximizations are replaced by explicit variables `ξ^k`, one per sample,
//! held by the sample's owner. The augmented Lagrangian is
//!
//! ```text
//! L̃aug = h(λ_v) + (1/N) Σ_k g_k(x_{v_k}, λ_{v_k}, ξ^k)
//!      + νᵀLλ_v + ηᵀ(L⊗I_d)x_v + ½ x_vᵀ(L⊗I_d)x_v + ½ λ_vᵀLλ_v
//! ```
//!
//! with `h(λ_v) = ε² (1ᵀλ_v) / n`.

use crate::error::{check_len, Error, Result};
use crate::feasible::FeasibleRegime;
use crate::graph::{LaplacianMatrix, NetworkGraph};
use crate::linalg;
use crate::objectives::{Objective, SampleFunction};

/// Samples `ξ̂_k ∈ R^m` and the agent that owns each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedDataset {
    m: usize,
    n_agents: usize,
    samples: Vec<Vec<f64>>,
    owners: Vec<usize>,
    by_agent: Vec<Vec<usize>>,
}

impl PartitionedDataset {
    /// `owners[k]` is the 0-indexed agent holding `samples[k]`. Every agent
    /// must own at least one sample.
    pub fn new(samples: Vec<Vec<f64>>, owners: Vec<usize>, n_agents: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidData("dataset is empty".into()));
        }
        check_len("sample owners", samples.len(), owners.len())?;
        let m = samples[0].len();
        if m == 0 {
            return Err(Error::InvalidData("samples have zero dimension".into()));
        }
        let mut by_agent = vec![Vec::new(); n_agents];
        for (k, (s, &owner)) in samples.iter().zip(&owners).enumerate() {
            if s.len() != m {
                return Err(Error::InvalidData(format!(
                    "sample {k} has dimension {}, expected {m}",
                    s.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("sample {k} is not finite")));
            }
            if owner >= n_agents {
                return Err(Error::InvalidData(format!(
                    "sample {k} owned by agent {} but there are {n_agents} agents",
                    owner + 1
                )));
            }
            by_agent[owner].push(k);
        }
        if let Some(i) = by_agent.iter().position(Vec::is_empty) {
            return Err(Error::InvalidData(format!("agent {} owns no samples", i + 1)));
        }
        Ok(Self {
            m,
            n_agents,
            samples,
            owners,
            by_agent,
        })
    }

    /// Contiguous blocks: the first `⌈N/n⌉`-ish samples go to agent 0, and so
    /// on; block sizes differ by at most one.
    pub fn equal_split(samples: Vec<Vec<f64>>, n_agents: usize) -> Result<Self> {
        let total = samples.len();
        if n_agents == 0 || total < n_agents {
            return Err(Error::InvalidData(format!(
                "cannot split {total} samples over {n_agents} agents"
            )));
        }
        let owners = (0..total).map(|k| k * n_agents / total).collect();
        Self::new(samples, owners, n_agents)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.samples[k]
    }

    /// 0-indexed owner of each sample.
    pub fn owners(&self) -> &[usize] {
        &self.owners
    }

    /// Sample indices held by agent `i`.
    pub fn owned_by(&self, i: usize) -> &[usize] {
        &self.by_agent[i]
    }

    /// Samples held by agents `0..count`, pooled.
    pub fn pooled_first_agents(&self, count: usize) -> Vec<Vec<f64>> {
        self.by_agent[..count.min(self.n_agents)]
            .iter()
            .flatten()
            .map(|&k| self.samples[k].clone())
            .collect()
    }
}

/// Graph, partitioned data, loss family, Wasserstein radius and feasible
/// regime of one distributed problem.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    graph: NetworkGraph,
    laplacian: LaplacianMatrix,
    data: PartitionedDataset,
    objective: Objective,
    epsilon: f64,
    regime: FeasibleRegime,
}

impl ProblemInstance {
    pub fn new(
        graph: NetworkGraph,
        data: PartitionedDataset,
        objective: Objective,
        epsilon: f64,
    ) -> Result<Self> {
        if !graph.is_connected() {
            return Err(Error::InvalidProblem("communication graph is not connected".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if data.n_agents() != graph.n() {
            return Err(Error::InvalidProblem(format!(
                "dataset is partitioned over {} agents but the graph has {}",
                data.n_agents(),
                graph.n()
            )));
        }
        check_len("sample dimension vs objective", objective.dim_xi(), data.dim())?;
        let laplacian = graph.laplacian();
        let regime = FeasibleRegime::for_objective(&objective);
        Ok(Self {
            graph,
            laplacian,
            data,
            objective,
            epsilon,
            regime,
        })
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn laplacian(&self) -> &LaplacianMatrix {
        &self.laplacian
    }

    pub fn data(&self) -> &PartitionedDataset {
        &self.data
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn regime(&self) -> FeasibleRegime {
        self.regime
    }

    /// Number of agents.
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn d(&self) -> usize {
        self.objective.dim_x()
    }

    pub fn m(&self) -> usize {
        self.objective.dim_xi()
    }

    /// Number of samples.
    pub fn num_samples(&self) -> usize {
        self.data.len()
    }

    /// A zero state of the right shape.
    pub fn zero_state(&self) -> SystemState {
        SystemState::zeros(self.n(), self.d(), self.m(), self.num_samples())
    }

    pub fn check_state(&self, s: &SystemState) -> Result<()> {
        check_len("state x_v", self.n() * self.d(), s.x.len())?;
        check_len("state lambda_v", self.n(), s.lambda.len())?;
        check_len("state nu", self.n(), s.nu.len())?;
        check_len("state eta", self.n() * self.d(), s.eta.len())?;
        check_len("state xi", self.m() * self.num_samples(), s.xi.len())
    }

    /// `L̃aug` at `s`.
    pub fn ltilde_aug(&self, s: &SystemState) -> Result<f64> {
        self.check_state(s)?;
        let (n, d, m) = (self.n(), self.d(), self.m());
        let big_n = self.num_samples() as f64;
        let h = self.epsilon * self.epsilon * s.lambda.iter().sum::<f64>() / n as f64;
        let mut sample_sum = 0.0;
        for (k, &owner) in self.data.owners().iter().enumerate() {
            let g = SampleFunction::new(&self.objective, self.data.sample(k))?;
            sample_sum += g.value(
                &s.x[owner * d..(owner + 1) * d],
                s.lambda[owner],
                &s.xi[k * m..(k + 1) * m],
            )?;
        }
        let l = &self.laplacian;
        let l_lambda = l.apply_blockwise(&s.lambda, 1)?;
        let l_x = l.apply_blockwise(&s.x, d)?;
        Ok(h + sample_sum / big_n
            + linalg::dot(&s.nu, &l_lambda)
            + linalg::dot(&s.eta, &l_x)
            + 0.5 * l.quadratic_form(&s.x, d)?
            + 0.5 * l.quadratic_form(&s.lambda, 1)?)
    }

    /// Inner maximizers `ξ^k*` for every sample at the owners' `(x_i, λ_i)`,
    /// stacked like [`SystemState::xi`].
    pub fn inner_maximizers(&self, x_v: &[f64], lambda_v: &[f64]) -> Result<Vec<f64>> {
        let (d, m) = (self.d(), self.m());
        check_len("stacked x", self.n() * d, x_v.len())?;
        check_len("stacked lambda", self.n(), lambda_v.len())?;
        let mut out = Vec::with_capacity(m * self.num_samples());
        for (k, &owner) in self.data.owners().iter().enumerate() {
            out.extend(self.objective.inner_maximizer(
                &x_v[owner * d..(owner + 1) * d],
                lambda_v[owner],
                self.data.sample(k),
            )?);
        }
        Ok(out)
    }

    /// `Laug(x_v, λ_v, ν, η) = max_{ξ} L̃aug`, using the closed-form maximizers.
    pub fn laug(&self, x_v: &[f64], lambda_v: &[f64], nu: &[f64], eta: &[f64]) -> Result<f64> {
        let xi = self.inner_maximizers(x_v, lambda_v)?;
        self.ltilde_aug(&SystemState {
            x: x_v.to_vec(),
            lambda: lambda_v.to_vec(),
            nu: nu.to_vec(),
            eta: eta.to_vec(),
            xi,
        })
    }

    /// Certificate value at a centralized `(x, λ)` over all samples.
    pub fn certificate(&self, x: &[f64], lambda: f64) -> Result<f64> {
        certificate(&self.objective, self.data.samples(), self.epsilon, x, lambda)
    }
}

/// `λε² + (1/N) Σ_k max_ξ g_k(x, λ, ξ)`, the optimal-value function of the
/// tractable DRO reformulation at a fixed `(x, λ)`.
pub fn certificate(
    obj: &Objective,
    samples: &[Vec<f64>],
    epsilon: f64,
    x: &[f64],
    lambda: f64,
) -> Result<f64> {
    Ok(certificate_with_gradient(obj, samples, epsilon, x, lambda)?.value)
}

/// Certificate value together with its gradient (Danskin: the gradient of
/// the inner max is the gradient of `g_k` at the inner maximizer).
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateEval {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_lambda: f64,
}

pub fn certificate_with_gradient(
    obj: &Objective,
    samples: &[Vec<f64>],
    epsilon: f64,
    x: &[f64],
    lambda: f64,
) -> Result<CertificateEval> {
    if samples.is_empty() {
        return Err(Error::InvalidData("certificate needs at least one sample".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidProblem(format!("epsilon must be >= 0, got {epsilon}")));
    }
    check_len("certificate x", obj.dim_x(), x.len())?;
    let big_n = samples.len() as f64;
    let mut value = 0.0;
    let mut grad_x = vec![0.0; obj.dim_x()];
    let mut grad_lambda = 0.0;
    let mut gx = vec![0.0; obj.dim_x()];
    for sample in samples {
        let g = SampleFunction::new(obj, sample)?;
        let xi = obj.inner_maximizer(x, lambda, sample)?;
        value += g.value(x, lambda, &xi)?;
        obj.grad_x_into(x, &xi, &mut gx);
        linalg::axpy(1.0, &gx, &mut grad_x);
        grad_lambda -= linalg::dist_sq(&xi, sample);
    }
    for g in &mut grad_x {
        *g /= big_n;
    }
    Ok(CertificateEval {
        value: lambda * epsilon * epsilon + value / big_n,
        grad_x,
        grad_lambda: epsilon * epsilon + grad_lambda / big_n,
    })
}

/// Full state of the saddle-point dynamics. `xi` stacks one `ξ^k ∈ R^m` per
/// sample in global sample order; each lives with the sample's owner.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
}

impl SystemState {
    pub fn zeros(n: usize, d: usize, m: usize, num_samples: usize) -> Self {
        Self {
            x: vec![0.0; n * d],
            lambda: vec![0.0; n],
            nu: vec![0.0; n],
            eta: vec![0.0; n * d],
            xi: vec![0.0; m * num_samples],
        }
    }

    /// Euclidean norm over every block.
    pub fn norm(&self) -> f64 {
        self.blocks().map(linalg::norm_sq).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().flatten().all(|v| v.is_finite())
    }

    fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        [
            self.x.as_slice(),
            &self.lambda,
            &self.nu,
            &self.eta,
            &self.xi,
        ]
        .into_iter()
    }

    /// `½ ‖self − other‖²` across all blocks.
    pub fn half_dist_sq(&self, other: &SystemState) -> f64 {
        0.5 * self
            .blocks()
            .zip(other.blocks())
            .map(|(a, b)| linalg::dist_sq(a, b))
            .sum::<f64>()
    }
}

/// `(1_n ⊗ x, λ 1_n)`.
pub fn lift(x: &[f64], lambda: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if lambda < 0.0 {
        return Err(Error::NegativeMultiplier(lambda));
    }
    Ok((x.repeat(n), vec![lambda; n]))
}

/// Agent averages of a stacked `(x_v, λ_v)` and the largest deviation of any
/// agent from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub x_bar: Vec<f64>,
    pub lambda_bar: f64,
    pub residual: f64,
}

impl Extracted {
    /// Whether the stacked pair is a valid centralized solution at `tol`.
    pub fn is_consensus(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

pub fn extract(x_v: &[f64], lambda_v: &[f64]) -> Result<Extracted> {
    let n = lambda_v.len();
    if n == 0 || x_v.len() % n != 0 {
        return Err(Error::DimensionMismatch {
            context: "extract",
            expected: n,
            got: x_v.len(),
        });
    }
    let d = x_v.len() / n;
    if d == 0 {
        return Err(Error::DimensionMismatch {
            context: "extract",
            expected: n,
            got: 0,
        });
    }
    // Average as agent 0's value plus the mean deviation from it, so a
    // consensus input comes back bit-for-bit.
    let first = &x_v[..d];
    let mut shift = vec![0.0; d];
    for block in x_v.chunks(d).skip(1) {
        for ((s, a), b) in shift.iter_mut().zip(block).zip(first) {
            *s += a - b;
        }
    }
    let x_bar: Vec<f64> = first.iter().zip(&shift).map(|(b, s)| b + s / n as f64).collect();
    let lambda_bar =
        lambda_v[0] + lambda_v[1..].iter().map(|l| l - lambda_v[0]).sum::<f64>() / n as f64;
    let mut residual = lambda_v
        .iter()
        .map(|l| (l - lambda_bar).abs())
        .fold(0.0, f64::max);
    for block in x_v.chunks(d) {
        for (a, b) in block.iter().zip(&x_bar) {
            residual = residual.max((a - b).abs());
        }
    }
    Ok(Extracted {
        x_bar,
        lambda_bar,
        residual,
    })
}
