//! Communication topology of the agent network.
//!
//! Vertices are 0-indexed here; configs and printed output use 1-indexed
//! vertex ids, converted by [`NetworkGraph::from_one_indexed`].

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Undirected edge `{i, j}` with `i < j` and a strictly positive weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Weighted undirected graph. Each stored edge stands for both `(i, j)` and
/// `(j, i)`.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    n: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

/// Wire form used in experiment configs: `{"n": 3, "edges": [[1, 2, 1.0], ...]}`
/// with 1-indexed vertices.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl NetworkGraph {
    /// Build from 0-indexed edges. Endpoints are normalized so `i < j`.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one vertex".into()));
        }
        let mut seen = BTreeSet::new();
        let mut stored = Vec::new();
        let mut neighbors = vec![Vec::new(); n];
        for (a, b, weight) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a vertex outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
            }
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) has non-positive weight {weight}"
                )));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((i, j)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
            stored.push(Edge { i, j, weight });
            neighbors[i].push((j, weight));
            neighbors[j].push((i, weight));
        }
        Ok(Self {
            n,
            edges: stored,
            neighbors,
        })
    }

    pub fn from_one_indexed(spec: &GraphSpec) -> Result<Self> {
        let mut edges = Vec::with_capacity(spec.edges.len());
        for &(i, j, w) in &spec.edges {
            if i == 0 || j == 0 {
                return Err(Error::InvalidGraph(format!(
                    "vertex ids are 1-indexed; edge ({i}, {j}) uses 0"
                )));
            }
            edges.push((i - 1, j - 1, w));
        }
        Self::new(spec.n, edges)
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            n: self.n,
            edges: self
                .edges
                .iter()
                .map(|e| (e.i + 1, e.j + 1, e.weight))
                .collect(),
        }
    }

    /// Ten-agent unit-weight ring `1–2–…–10–1` with chords (1,4), (2,5),
    /// (3,7), (6,10), as used by the regression experiment.
    pub fn ring_with_chords() -> Self {
        let spec = GraphSpec {
            n: 10,
            edges: (1..=10)
                .map(|i| (i, i % 10 + 1, 1.0))
                .chain([(1, 4, 1.0), (2, 5, 1.0), (3, 7, 1.0), (6, 10, 1.0)])
                .collect(),
        };
        Self::from_one_indexed(&spec).expect("static topology is valid")
    }

    /// Path `0–1–…–(n−1)` with unit weights.
    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i, 1.0)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `i` with edge weights, in insertion order.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// Weighted degree `Σ_j a_ij`.
    pub fn degree(&self, i: usize) -> f64 {
        self.neighbors[i].iter().map(|&(_, w)| w).sum()
    }

    /// Breadth-first reachability from vertex 0.
    pub fn is_connected(&self) -> bool {
        let mut visited = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        visited[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.neighbors[u] {
                if !visited[v] {
                    visited[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// `L = D − A`, dense.
    pub fn laplacian(&self) -> LaplacianMatrix {
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        for e in &self.edges {
            entries[e.i * n + e.j] = -e.weight;
            entries[e.j * n + e.i] = -e.weight;
            entries[e.i * n + e.i] += e.weight;
            entries[e.j * n + e.j] += e.weight;
        }
        LaplacianMatrix { n, entries }
    }
}

/// Dense symmetric graph Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl LaplacianMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `(L ⊗ I_b) z` computed blockwise; `z` stacks `n` blocks of length `b`.
    pub fn apply_blockwise(&self, z: &[f64], b: usize) -> Result<Vec<f64>> {
        check_len("laplacian blockwise action", self.n * b, z.len())?;
        let mut out = vec![0.0; z.len()];
        for i in 0..self.n {
            let oi = &mut out[i * b..(i + 1) * b];
            for j in 0..self.n {
                let lij = self.get(i, j);
                if lij == 0.0 {
                    continue;
                }
                for (o, zj) in oi.iter_mut().zip(&z[j * b..(j + 1) * b]) {
                    *o += lij * zj;
                }
            }
        }
        Ok(out)
    }

    /// `zᵀ (L ⊗ I_b) z`, evaluated as `Σ_{i<j} a_ij ‖z_i − z_j‖²` so the
    /// result is nonnegative by construction.
    pub fn quadratic_form(&self, z: &[f64], b: usize) -> Result<f64> {
        check_len("laplacian quadratic form", self.n * b, z.len())?;
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let a = -self.get(i, j);
                if a == 0.0 {
                    continue;
                }
                let d: f64 = z[i * b..(i + 1) * b]
                    .iter()
                    .zip(&z[j * b..(j + 1) * b])
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum();
                acc += a * d;
            }
        }
        Ok(acc)
    }
}
