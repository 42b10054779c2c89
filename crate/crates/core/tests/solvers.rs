mod common;

use ddro_core::dynamics::{run_with, RunOptions};
use ddro_core::oracle::solve_centralized_from;
use ddro_core::problem::certificate_with_gradient;
use ddro_core::{
    certificate, equilibrium_residual, extract, generate_regression_data, lasalle_value, lift, linalg, run,
    solve_centralized, step, validation_loss, vector_field, IntegratorConfig, NetworkGraph, Objective,
    OracleConfig, PartitionedDataset, ProblemInstance, RegressionGenerator, StopReason,
};
use nalgebra::DMatrix;

fn scalar_quadratic_path() -> ProblemInstance {
    let obj = Objective::quadratic_xi(
        DMatrix::from_row_slice(1, 1, &[0.5]),
        DMatrix::from_row_slice(1, 1, &[1.0]),
        DMatrix::from_row_slice(1, 1, &[1.0]),
        vec![0.2],
    )
    .unwrap();
    let data = PartitionedDataset::equal_split(vec![vec![-0.4], vec![0.3], vec![1.1]], 3).unwrap();
    ProblemInstance::new(NetworkGraph::path(3).unwrap(), data, obj, 0.5).unwrap()
}

fn tight() -> OracleConfig {
    OracleConfig {
        tol: 1e-11,
        max_iter: 1_000_000,
        ..Default::default()
    }
}

/// Distributed run from `(x, λ) = (0, threshold + 1)` until tight convergence.
fn converge(p: &ProblemInstance) -> ddro_core::RunOutcome {
    let mut s = p.zero_state();
    let thr = p.objective().concavity_threshold(&vec![0.0; p.d()]);
    s.lambda.iter_mut().for_each(|l| *l = thr + 1.0);
    let cfg = IntegratorConfig {
        step: 0.02,
        max_steps: 2_000_000,
        vf_tol: 1e-10,
        record_every: 500,
        ..Default::default()
    };
    let out = run(p, &s, &cfg, None).unwrap();
    assert_eq!(out.stop_reason, StopReason::Converged);
    out
}

#[test]
fn path_instance_matches_oracle() {
    let p = scalar_quadratic_path();
    let out = converge(&p);
    let ex = extract(&out.state.x, &out.state.lambda).unwrap();
    let sol = solve_centralized(p.objective(), p.data().samples(), p.epsilon(), &tight()).unwrap();
    assert!((ex.x_bar[0] - sol.x[0]).abs() < 1e-4, "{:?} vs {:?}", ex.x_bar, sol.x);
    assert!((ex.lambda_bar - sol.lambda).abs() < 1e-4);
    assert!(ex.is_consensus(1e-6));
    let last = out.diagnostics.last().unwrap();
    assert!(last.consensus_x <= 1e-4 && last.consensus_lambda <= 1e-4);
    assert!(out.vf_norm <= 1e-10);
    assert!(equilibrium_residual(&p, &out.state).unwrap() <= 1e-6);
}

#[test]
fn exact_equilibrium_converges_immediately() {
    let p = scalar_quadratic_path();
    let eq = converge(&p).state;
    let cfg = IntegratorConfig {
        step: 0.02,
        vf_tol: 1e-6,
        ..Default::default()
    };
    let again = run(&p, &eq, &cfg, Some(&eq)).unwrap();
    assert_eq!(again.stop_reason, StopReason::Converged);
    assert!(again.steps <= 1);
    assert_eq!(again.diagnostics.last().unwrap().lasalle_v, Some(0.0));
    let next = step(&p, &eq, &cfg).unwrap();
    assert!(next.half_dist_sq(&eq).sqrt() <= 1e-9);
}

#[test]
fn single_agent_field_is_plain_saddle_flow() {
    let obj = Objective::least_squares(1.0, 2).unwrap();
    let samples = vec![vec![0.5, 1.0], vec![-1.0, -1.5]];
    let data = PartitionedDataset::equal_split(samples.clone(), 1).unwrap();
    let p = ProblemInstance::new(NetworkGraph::new(1, []).unwrap(), data, obj.clone(), 0.3).unwrap();
    let mut s = p.zero_state();
    s.x = vec![1.2, -0.1];
    s.lambda = vec![5.0];
    s.nu = vec![3.0];
    s.eta = vec![1.0, -2.0];
    s.xi = p.inner_maximizers(&s.x, &s.lambda).unwrap();
    let f = vector_field(&p, &s).unwrap();
    assert!(f.nu[0] == 0.0 && f.eta.iter().all(|v| *v == 0.0));
    // With ξ at the maximizers the primal field is minus the certificate gradient.
    let c = certificate_with_gradient(&obj, &samples, 0.3, &s.x, 5.0).unwrap();
    assert!(common::rel_err(&f.x, &c.grad_x.iter().map(|g| -g).collect::<Vec<_>>()) < 1e-12);
    assert!((f.lambda[0] + c.grad_lambda).abs() < 1e-12);
}

#[test]
fn lasalle_function_descends_and_residual_shrinks() {
    let p = common::random_instance(77, ddro_core::ObjectiveKind::LeastSquares);
    let reference = converge(&p).state;
    let mut r = common::rng(78);
    let s0 = common::random_interior_state(&mut r, &p);
    let cfg = IntegratorConfig {
        step: 0.02,
        max_steps: 30_000,
        vf_tol: 1e-12,
        record_every: 1,
        ..Default::default()
    };
    let out = run_with(&p, &s0, &cfg, RunOptions { reference: Some(&reference), record_state: true }).unwrap();
    let recs = &out.diagnostics.records;
    let c = 0.5 * recs.iter().map(|r| r.vf_norm.powi(2)).fold(0.0, f64::max);
    for w in recs.windows(2) {
        assert!(w[1].lasalle_v.unwrap() <= w[0].lasalle_v.unwrap() + 10.0 * c * cfg.step * cfg.step);
    }
    assert_eq!(recs[0].lasalle_v.unwrap(), lasalle_value(&s0, &reference).unwrap());
    let first = equilibrium_residual(&p, &s0).unwrap();
    let last = equilibrium_residual(&p, &out.state).unwrap();
    assert!(first > 0.0 && last < 1e-3 * first, "{first} -> {last}");
}

#[test]
fn converged_point_is_locally_optimal() {
    for (i, kind) in common::KINDS.into_iter().enumerate() {
        let p = common::random_instance(500 + i as u64, kind);
        let out = converge(&p);
        let ex = extract(&out.state.x, &out.state.lambda).unwrap();
        let j0 = p.certificate(&ex.x_bar, ex.lambda_bar).unwrap();
        let regime = p.regime();
        let mut r = common::rng(600 + i as u64);
        for _ in 0..50 {
            let mut dir = common::vec_uniform(&mut r, p.d() + 1, -1.0, 1.0);
            let norm = linalg::norm(&dir);
            dir.iter_mut().for_each(|v| *v *= 1e-2 / norm);
            let mut x: Vec<f64> = ex.x_bar.iter().zip(&dir).map(|(a, b)| a + b).collect();
            let l = regime.project_in_place(&mut x, ex.lambda_bar + dir[p.d()]).unwrap();
            let Ok(j) = p.certificate(&x, l) else { continue };
            assert!(j0 <= j + 1e-6, "{kind:?}: {j0} > {j}");
        }
    }
}

#[test]
fn trajectories_are_bitwise_reproducible() {
    let p = common::random_instance(91, ddro_core::ObjectiveKind::QuadraticXi);
    let mut r = common::rng(92);
    let s0 = common::random_interior_state(&mut r, &p);
    let cfg = IntegratorConfig { step: 0.01, max_steps: 5000, record_every: 7, ..Default::default() };
    let a = run(&p, &s0, &cfg, None).unwrap();
    let b = run(&p, &s0, &cfg, None).unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(a.diagnostics, b.diagnostics);
}

#[test]
fn infeasible_start_is_projected() {
    let p = common::random_instance(5, ddro_core::ObjectiveKind::LeastSquares);
    let mut s = p.zero_state();
    s.x.iter_mut().for_each(|v| *v = 3.0);
    s.lambda.iter_mut().for_each(|v| *v = -1.0);
    let out = run(&p, &s, &IntegratorConfig { max_steps: 1, ..Default::default() }, None).unwrap();
    assert!(out.diagnostics.records[0].interior_margin >= -1e-9);
}

/// Grid search over `(x, λ)` with successive refinement.
fn grid_min(f: impl Fn(f64, f64) -> Option<f64>, mut xr: (f64, f64), mut lr: (f64, f64)) -> (f64, f64, f64) {
    let mut best = (0.0, 0.0, f64::INFINITY);
    for _ in 0..40 {
        for i in 0..=60 {
            for j in 0..=60 {
                let x = xr.0 + (xr.1 - xr.0) * i as f64 / 60.0;
                let l = lr.0 + (lr.1 - lr.0) * j as f64 / 60.0;
                if let Some(v) = f(x, l) {
                    if v < best.2 {
                        best = (x, l, v);
                    }
                }
            }
        }
        let (dx, dl) = ((xr.1 - xr.0) / 10.0, (lr.1 - lr.0) / 10.0);
        xr = (best.0 - dx, best.0 + dx);
        lr = ((best.1 - dl).max(lr.0), best.1 + dl);
    }
    best
}

#[test]
fn oracle_matches_grid_search() {
    let obj = Objective::quadratic_xi(
        DMatrix::from_row_slice(1, 1, &[1.0]),
        DMatrix::from_row_slice(1, 1, &[0.7]),
        DMatrix::from_row_slice(1, 1, &[2.0]),
        vec![-0.5],
    )
    .unwrap();
    let samples = vec![vec![-1.0], vec![0.2], vec![0.5], vec![1.4]];
    let eps = 0.4;
    let sol = solve_centralized(&obj, &samples, eps, &tight()).unwrap();
    let (gx, gl, gv) = grid_min(|x, l| certificate(&obj, &samples, eps, &[x], l).ok(), (-3.0, 3.0), (1.0, 20.0));
    assert!((sol.value - gv).abs() < 1e-8, "{} vs {gv}", sol.value);
    assert!((sol.x[0] - gx).abs() < 1e-4 && (sol.lambda - gl).abs() < 1e-4);
}

#[test]
fn oracle_trivial_instance() {
    let obj = Objective::quadratic_xi(
        DMatrix::identity(2, 2),
        DMatrix::zeros(2, 2),
        DMatrix::identity(2, 2) * 2.0,
        vec![0.0, 0.0],
    )
    .unwrap();
    let sol = solve_centralized(&obj, &[vec![0.0, 0.0]], 0.0, &OracleConfig::default()).unwrap();
    assert!(linalg::norm(&sol.x) < 1e-8 && sol.value.abs() < 1e-8);
}

/// For least squares the inner max has value `a r² λ / (λ − a‖v‖²)`, so at a
/// fixed `x` the best multiplier is `c + √(c · mean(a r²)) / ε`.
#[test]
fn least_squares_multiplier_closed_form() {
    let data = generate_regression_data(&RegressionGenerator::default(), 1, 4).unwrap();
    let samples = data.samples().to_vec();
    let obj = Objective::least_squares(1.0, 5).unwrap();
    let eps = 0.05;
    let sol = solve_centralized(&obj, &samples, eps, &tight()).unwrap();
    let v: Vec<f64> = sol.x[..4].iter().map(|x| -x).chain([1.0]).collect();
    let c = linalg::norm_sq(&v);
    let r2: f64 = samples
        .iter()
        .map(|s| {
            let pred = linalg::dot(&s[..4], &sol.x[..4]) + sol.x[4];
            (s[4] - pred).powi(2)
        })
        .sum::<f64>()
        / samples.len() as f64;
    let lambda_star = c + (c * r2).sqrt() / eps;
    assert!((sol.lambda - lambda_star).abs() < 1e-3 * lambda_star, "{} vs {lambda_star}", sol.lambda);
    let closed = lambda_star * eps * eps + r2 * lambda_star / (lambda_star - c);
    assert!((sol.value - closed).abs() < 1e-8);
}

#[test]
fn oracle_history_is_monotone_and_start_independent() {
    let p = common::random_instance(31, ddro_core::ObjectiveKind::ConvexConcave);
    let a = solve_centralized(p.objective(), p.data().samples(), p.epsilon(), &tight()).unwrap();
    for w in a.history.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
    }
    let start = vec![2.0; p.d()];
    let b = solve_centralized_from(p.objective(), p.data().samples(), p.epsilon(), &tight(), &start, Some(7.0)).unwrap();
    assert!((a.value - b.value).abs() < 1e-9);
}

#[test]
fn generator_noise_and_validation_loss() {
    let g = RegressionGenerator::default();
    let draws = g.sample_set(100_000, 12);
    let mean = draws.iter().map(|s| s[4] - linalg::dot(&g.weights, &s[..4])).sum::<f64>() / draws.len() as f64;
    assert!(mean.abs() <= 0.01, "{mean}");
    let obj = Objective::least_squares(1.0, 5).unwrap();
    let val = g.sample_set(10_000, 13);
    let loss = validation_loss(&obj, &[1.0, 4.0, 3.0, 2.0, 0.0], &val).unwrap();
    assert!((0.30..=0.37).contains(&loss), "{loss}");
    assert!((loss - 1.0 / 3.0).abs() < 0.015);
}

#[test]
fn lift_rejects_negative_multiplier() {
    assert!(lift(&[1.0], -0.5, 2).is_err());
}
