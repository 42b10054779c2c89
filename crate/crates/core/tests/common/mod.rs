#![allow(dead_code)]

use ddro_core::{NetworkGraph, Objective, ObjectiveKind, PartitionedDataset, ProblemInstance, SystemState};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KINDS: [ObjectiveKind; 3] = [
    ObjectiveKind::ConvexConcave,
    ObjectiveKind::QuadraticXi,
    ObjectiveKind::LeastSquares,
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn vec_uniform(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| uniform(rng, lo, hi)).collect()
}

fn mat_uniform(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| uniform(rng, lo, hi))
}

/// `BᵀB / k + shift·I`.
fn spd(rng: &mut ChaCha8Rng, m: usize, shift: f64) -> DMatrix<f64> {
    let b = mat_uniform(rng, m, m, -1.0, 1.0);
    let g = b.transpose() * &b / m as f64 + DMatrix::identity(m, m) * shift;
    (&g + g.transpose()) * 0.5
}

/// Random objective of the given kind with `d, m ≤ 3`.
pub fn random_objective(rng: &mut ChaCha8Rng, kind: ObjectiveKind) -> Objective {
    match kind {
        ObjectiveKind::LeastSquares => {
            let dim = rng.random_range(2..=3);
            Objective::least_squares(uniform(rng, 0.5, 1.5), dim).unwrap()
        }
        ObjectiveKind::QuadraticXi => {
            let d = rng.random_range(1..=3);
            let m = rng.random_range(1..=3);
            Objective::quadratic_xi(
                spd(rng, m, 0.2),
                mat_uniform(rng, d, m, -1.0, 1.0),
                spd(rng, d, 0.5),
                vec_uniform(rng, d, -1.0, 1.0),
            )
            .unwrap()
        }
        ObjectiveKind::ConvexConcave => {
            let d = rng.random_range(1..=3);
            let m = rng.random_range(1..=3);
            Objective::convex_concave(
                mat_uniform(rng, d, m, -1.0, 1.0),
                spd(rng, m, 0.3),
                uniform(rng, 0.5, 2.0),
            )
            .unwrap()
        }
    }
}

/// Connected graph on `n` vertices: a random spanning path plus random
/// chords, weights in `[0.5, 1.5]`.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, extra_prob: f64) -> NetworkGraph {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut edges = Vec::new();
    let mut present = std::collections::BTreeSet::new();
    for w in order.windows(2) {
        let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
        present.insert((a, b));
        edges.push((a, b, uniform(rng, 0.5, 1.5)));
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if !present.contains(&(a, b)) && rng.random::<f64>() < extra_prob {
                edges.push((a, b, uniform(rng, 0.5, 1.5)));
            }
        }
    }
    NetworkGraph::new(n, edges).unwrap()
}

/// `n ≤ 4` agents, `N ≤ 8` samples, `d, m ≤ 3`.
pub fn random_instance(seed: u64, kind: ObjectiveKind) -> ProblemInstance {
    let mut rng = rng(seed);
    let n = rng.random_range(1..=4);
    let big_n = rng.random_range(n..=8);
    let obj = random_objective(&mut rng, kind);
    let m = obj.dim_xi();
    let samples: Vec<Vec<f64>> = (0..big_n).map(|_| vec_uniform(&mut rng, m, -1.5, 1.5)).collect();
    let mut owners: Vec<usize> = (0..n).collect();
    owners.extend((n..big_n).map(|_| rng.random_range(0..n)));
    let data = PartitionedDataset::new(samples, owners, n).unwrap();
    let graph = random_connected_graph(&mut rng, n, 0.4);
    let eps = uniform(&mut rng, 0.4, 1.0);
    ProblemInstance::new(graph, data, obj, eps).unwrap()
}

/// A state whose primal block is strictly inside the feasible set.
pub fn random_interior_state(rng: &mut ChaCha8Rng, p: &ProblemInstance) -> SystemState {
    let mut s = p.zero_state();
    s.x = vec_uniform(rng, s.x.len(), -1.0, 1.0);
    let d = p.d();
    for i in 0..p.n() {
        let thr = p.objective().concavity_threshold(&s.x[i * d..(i + 1) * d]);
        s.lambda[i] = thr + uniform(rng, 0.5, 3.0);
    }
    s.nu = vec_uniform(rng, s.nu.len(), -1.0, 1.0);
    s.eta = vec_uniform(rng, s.eta.len(), -1.0, 1.0);
    s.xi = vec_uniform(rng, s.xi.len(), -1.5, 1.5);
    s
}

/// Central difference of `f` along every coordinate of `z`.
pub fn central_diff(z: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = z.to_vec();
    (0..z.len())
        .map(|i| {
            let orig = work[i];
            work[i] = orig + h;
            let up = f(&work);
            work[i] = orig - h;
            let down = f(&work);
            work[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(1, ‖b‖)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}
