//! Distributed data-driven distributionally robust optimization.
//!
//! A network of agents, each holding a private share of samples, jointly
//! solves the 2-Wasserstein DRO problem
//!
//! ```text
//! inf_{λ ≥ 0, x}  λ ε² + (1/N) Σ_k max_ξ ( f(x, ξ) − λ ‖ξ − ξ̂_k‖² )
//! ```
//!
//! by integrating projected saddle-point dynamics of an augmented Lagrangian
//! over the communication graph. Agents exchange only their estimates of
//! `(x, λ)` and the consensus multipliers, never their samples.
//!
//! Module map:
//! - [`graph`]: weighted undirected topology and its Laplacian.
//! - [`objectives`]: the loss families, their gradients and concavity thresholds.
//! - [`feasible`]: per-agent feasible sets and exact Euclidean projections.
//! - [`problem`]: distributed instance, augmented Lagrangian, certificate.
//! - [`dynamics`]: the saddle-point vector field and projected Euler integrator.
//! - [`oracle`]: centralized reference solver, validation loss, cooperation sweep.
//! - [`experiment`]: JSON configs, synthetic regression data, artifact writing.

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod feasible;
pub mod graph;
pub mod linalg;
pub mod objectives;
pub mod oracle;
pub mod problem;

pub use dynamics::{
    equilibrium_residual, lasalle_value, run, step, vector_field, DiagnosticRecord,
    IntegratorConfig, RunOutcome, StopReason, TrajectoryDiagnostics,
};
pub use error::{Error, Result};
pub use experiment::{
    generate_regression_data, run_experiment, ExperimentConfig, ExperimentReport, Mode,
    RegressionGenerator, Summary,
};
pub use feasible::FeasibleRegime;
pub use graph::{LaplacianMatrix, NetworkGraph};
pub use objectives::{Objective, ObjectiveKind, SampleFunction};
pub use oracle::{
    cooperation_benefit, solve_centralized, validation_loss, CentralizedSolution,
    CooperationRow, OracleConfig,
};
pub use problem::{certificate, extract, lift, Extracted, PartitionedDataset, ProblemInstance, SystemState};
