//! Loss families `f(x, ξ)` and the per-sample penalized functions
//!
//! ```text
//! g_k(x, λ, ξ) = f(x, ξ) − λ ‖ξ − ξ̂_k‖²
//! ```
//!
//! All three families are quadratic in `ξ`, so the inner maximization of
//! `g_k` over `ξ` has a closed form whenever `λ` exceeds the family's
//! concavity threshold.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg;

/// Margin by which `λ` must exceed the concavity threshold before the inner
/// maximum is treated as attained.
pub const INNER_MAX_MARGIN: f64 = 1e-8;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    ConvexConcave,
    QuadraticXi,
    LeastSquares,
}

/// Config form. Matrices are row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    /// `f = ½c‖x‖² + xᵀAξ − ½ξᵀSξ`
    ConvexConcave {
        coupling: Vec<Vec<f64>>,
        s: Vec<Vec<f64>>,
        c: f64,
    },
    /// `f = ξᵀQξ + xᵀRξ + ½xᵀPx + qᵀx`
    QuadraticXi {
        q: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        #[serde(default)]
        p: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        linear: Option<Vec<f64>>,
    },
    /// `f = a (ξ_m − (ξ_{1:m−1}; 1)ᵀ x)²` with `d = m = dim`
    LeastSquares { a: f64, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Params {
    ConvexConcave {
        coupling: DMatrix<f64>,
        s: DMatrix<f64>,
        c: f64,
    },
    QuadraticXi {
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        p: DMatrix<f64>,
        linear: Vec<f64>,
        lambda_max_q: f64,
    },
    LeastSquares {
        a: f64,
    },
}

/// A loss family with fixed parameters, decision dimension `d` and
/// uncertainty dimension `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    d: usize,
    m: usize,
    params: Params,
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::InvalidObjective(format!("matrix `{name}` is empty")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidObjective(format!("matrix `{name}` is ragged")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidObjective(format!(
            "matrix `{name}` has non-finite entries"
        )));
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl Objective {
    pub fn least_squares(a: f64, dim: usize) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidObjective(format!(
                "least-squares weight must be positive, got {a}"
            )));
        }
        if dim < 2 {
            return Err(Error::InvalidObjective(format!(
                "least-squares needs dim >= 2 (inputs plus output), got {dim}"
            )));
        }
        Ok(Self {
            d: dim,
            m: dim,
            params: Params::LeastSquares { a },
        })
    }

    /// `q` is `m×m` symmetric positive definite, `r` is `d×m`, `p` is `d×d`
    /// symmetric positive semidefinite and `linear` has length `d`.
    pub fn quadratic_xi(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        p: DMatrix<f64>,
        linear: Vec<f64>,
    ) -> Result<Self> {
        let m = q.nrows();
        let d = r.nrows();
        if q.ncols() != m || r.ncols() != m {
            return Err(Error::InvalidObjective(format!(
                "Q must be m×m and R d×m; got Q {}×{}, R {}×{}",
                q.nrows(),
                q.ncols(),
                r.nrows(),
                r.ncols()
            )));
        }
        if p.nrows() != d || p.ncols() != d || linear.len() != d {
            return Err(Error::InvalidObjective(format!(
                "P must be {d}×{d} and the linear term length {d}"
            )));
        }
        if !linalg::is_symmetric(&q, 1e-12) || !linalg::is_positive_definite(&q, 0.0) {
            return Err(Error::InvalidObjective(
                "Q must be symmetric positive definite".into(),
            ));
        }
        if !linalg::is_symmetric(&p, 1e-12)
            || !linalg::is_positive_definite(&p, 1e-12 * (1.0 + p.amax()))
        {
            return Err(Error::InvalidObjective(
                "P must be symmetric positive semidefinite".into(),
            ));
        }
        let lambda_max_q = linalg::lambda_max_power(&q, POWER_TOL, POWER_MAX_ITER);
        Ok(Self {
            d,
            m,
            params: Params::QuadraticXi {
                q,
                r,
                p,
                linear,
                lambda_max_q,
            },
        })
    }

    /// `coupling` is `d×m`, `s` is `m×m` symmetric positive semidefinite,
    /// `c ≥ 0`.
    pub fn convex_concave(coupling: DMatrix<f64>, s: DMatrix<f64>, c: f64) -> Result<Self> {
        let d = coupling.nrows();
        let m = coupling.ncols();
        if s.nrows() != m || s.ncols() != m {
            return Err(Error::InvalidObjective(format!("S must be {m}×{m}")));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidObjective(format!("c must be >= 0, got {c}")));
        }
        if !linalg::is_symmetric(&s, 1e-12)
            || !linalg::is_positive_definite(&s, 1e-12 * (1.0 + s.amax()))
        {
            return Err(Error::InvalidObjective(
                "S must be symmetric positive semidefinite".into(),
            ));
        }
        Ok(Self {
            d,
            m,
            params: Params::ConvexConcave { coupling, s, c },
        })
    }

    pub fn from_spec(spec: &ObjectiveSpec) -> Result<Self> {
        match spec {
            ObjectiveSpec::LeastSquares { a, dim } => Self::least_squares(*a, *dim),
            ObjectiveSpec::QuadraticXi { q, r, p, linear } => {
                let q = matrix_from_rows("q", q)?;
                let r = matrix_from_rows("r", r)?;
                let d = r.nrows();
                let p = match p {
                    Some(rows) => matrix_from_rows("p", rows)?,
                    None => DMatrix::zeros(d, d),
                };
                let linear = linear.clone().unwrap_or_else(|| vec![0.0; d]);
                Self::quadratic_xi(q, r, p, linear)
            }
            ObjectiveSpec::ConvexConcave { coupling, s, c } => Self::convex_concave(
                matrix_from_rows("coupling", coupling)?,
                matrix_from_rows("s", s)?,
                *c,
            ),
        }
    }

    pub fn to_spec(&self) -> ObjectiveSpec {
        match &self.params {
            Params::LeastSquares { a } => ObjectiveSpec::LeastSquares { a: *a, dim: self.d },
            Params::QuadraticXi {
                q, r, p, linear, ..
            } => ObjectiveSpec::QuadraticXi {
                q: rows_of(q),
                r: rows_of(r),
                p: Some(rows_of(p)),
                linear: Some(linear.clone()),
            },
            Params::ConvexConcave { coupling, s, c } => ObjectiveSpec::ConvexConcave {
                coupling: rows_of(coupling),
                s: rows_of(s),
                c: *c,
            },
        }
    }

    pub fn kind(&self) -> ObjectiveKind {
        match self.params {
            Params::ConvexConcave { .. } => ObjectiveKind::ConvexConcave,
            Params::QuadraticXi { .. } => ObjectiveKind::QuadraticXi,
            Params::LeastSquares { .. } => ObjectiveKind::LeastSquares,
        }
    }

    /// Decision dimension `d`.
    pub fn dim_x(&self) -> usize {
        self.d
    }

    /// Uncertainty dimension `m`.
    pub fn dim_xi(&self) -> usize {
        self.m
    }

    /// `λ_max(Q)` for the quadratic family, `None` otherwise.
    pub fn lambda_max_q(&self) -> Option<f64> {
        match self.params {
            Params::QuadraticXi { lambda_max_q, .. } => Some(lambda_max_q),
            _ => None,
        }
    }

    /// Least-squares weight `a`, `None` for other families.
    pub fn least_squares_weight(&self) -> Option<f64> {
        match self.params {
            Params::LeastSquares { a } => Some(a),
            _ => None,
        }
    }

    fn check(&self, x: &[f64], xi: &[f64]) -> Result<()> {
        check_len("objective x", self.d, x.len())?;
        check_len("objective xi", self.m, xi.len())
    }

    pub fn f(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        self.check(x, xi)?;
        Ok(self.f_unchecked(x, xi))
    }

    pub fn grad_x(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        self.check(x, xi)?;
        let mut out = vec![0.0; self.d];
        self.grad_x_into(x, xi, &mut out);
        Ok(out)
    }

    pub fn grad_xi(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        self.check(x, xi)?;
        let mut out = vec![0.0; self.m];
        self.grad_xi_into(x, xi, &mut out);
        Ok(out)
    }

    /// Least-squares residual `ξ_m − (ξ_{1:m−1}; 1)ᵀ x`.
    #[inline]
    fn ls_residual(x: &[f64], xi: &[f64]) -> f64 {
        let m = xi.len();
        let pred: f64 = xi[..m - 1].iter().zip(&x[..m - 1]).map(|(a, b)| a * b).sum::<f64>() + x[m - 1];
        xi[m - 1] - pred
    }

    pub(crate) fn f_unchecked(&self, x: &[f64], xi: &[f64]) -> f64 {
        match &self.params {
            Params::LeastSquares { a } => {
                let r = Self::ls_residual(x, xi);
                a * r * r
            }
            Params::QuadraticXi {
                q, r, p, linear, ..
            } => {
                let mut rx = 0.0;
                for i in 0..self.d {
                    for j in 0..self.m {
                        rx += x[i] * r[(i, j)] * xi[j];
                    }
                }
                linalg::quad_form(q, xi) + rx + 0.5 * linalg::quad_form(p, x) + linalg::dot(linear, x)
            }
            Params::ConvexConcave { coupling, s, c } => {
                let mut ax = 0.0;
                for i in 0..self.d {
                    for j in 0..self.m {
                        ax += x[i] * coupling[(i, j)] * xi[j];
                    }
                }
                0.5 * c * linalg::norm_sq(x) + ax - 0.5 * linalg::quad_form(s, xi)
            }
        }
    }

    /// Overwrites `out` with `∇_x f(x, ξ)`.
    pub(crate) fn grad_x_into(&self, x: &[f64], xi: &[f64], out: &mut [f64]) {
        match &self.params {
            Params::LeastSquares { a } => {
                let m = self.m;
                let r = Self::ls_residual(x, xi);
                let k = -2.0 * a * r;
                for (o, xij) in out[..m - 1].iter_mut().zip(&xi[..m - 1]) {
                    *o = k * xij;
                }
                out[m - 1] = k;
            }
            Params::QuadraticXi {
                r, p, linear, ..
            } => {
                for i in 0..self.d {
                    let mut acc = linear[i];
                    for j in 0..self.m {
                        acc += r[(i, j)] * xi[j];
                    }
                    for j in 0..self.d {
                        acc += p[(i, j)] * x[j];
                    }
                    out[i] = acc;
                }
            }
            Params::ConvexConcave { coupling, c, .. } => {
                for i in 0..self.d {
                    let mut acc = c * x[i];
                    for j in 0..self.m {
                        acc += coupling[(i, j)] * xi[j];
                    }
                    out[i] = acc;
                }
            }
        }
    }

    /// Overwrites `out` with `∇_ξ f(x, ξ)`.
    pub(crate) fn grad_xi_into(&self, x: &[f64], xi: &[f64], out: &mut [f64]) {
        match &self.params {
            Params::LeastSquares { a } => {
                let m = self.m;
                let r = Self::ls_residual(x, xi);
                let k = 2.0 * a * r;
                for (o, xj) in out[..m - 1].iter_mut().zip(&x[..m - 1]) {
                    *o = -k * xj;
                }
                out[m - 1] = k;
            }
            Params::QuadraticXi { q, r, .. } => {
                for j in 0..self.m {
                    let mut acc = 0.0;
                    for l in 0..self.m {
                        acc += (q[(j, l)] + q[(l, j)]) * xi[l];
                    }
                    for i in 0..self.d {
                        acc += r[(i, j)] * x[i];
                    }
                    out[j] = acc;
                }
            }
            Params::ConvexConcave { coupling, s, .. } => {
                for j in 0..self.m {
                    let mut acc = 0.0;
                    for i in 0..self.d {
                        acc += coupling[(i, j)] * x[i];
                    }
                    for l in 0..self.m {
                        acc -= s[(j, l)] * xi[l];
                    }
                    out[j] = acc;
                }
            }
        }
    }

    /// Hessian of `ξ ↦ f(x, ξ)`; constant in `ξ` for every family.
    pub fn xi_hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_len("objective x", self.d, x.len())?;
        Ok(match &self.params {
            Params::LeastSquares { a } => {
                let v = self.ls_direction(x);
                DMatrix::from_fn(self.m, self.m, |i, j| 2.0 * a * v[i] * v[j])
            }
            Params::QuadraticXi { q, .. } => q + q.transpose(),
            Params::ConvexConcave { s, .. } => -s,
        })
    }

    /// `v = (−x_{1:m−1}; 1)`, so that the least-squares loss is `a (vᵀξ − x_m)²`.
    fn ls_direction(&self, x: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut v: Vec<f64> = x[..m - 1].iter().map(|xi| -xi).collect();
        v.push(1.0);
        v
    }

    /// Smallest `λ̄ ≥ 0` such that `ξ ↦ g_k(x, λ, ξ)` is concave for every
    /// `λ ≥ λ̄`.
    pub fn concavity_threshold(&self, x: &[f64]) -> f64 {
        match &self.params {
            Params::ConvexConcave { .. } => 0.0,
            Params::QuadraticXi { lambda_max_q, .. } => *lambda_max_q,
            Params::LeastSquares { a } => {
                let m = self.m;
                a * (linalg::norm_sq(&x[..m - 1]) + 1.0)
            }
        }
    }

    /// Closed-form `argmax_ξ g_k(x, λ, ξ)` for the sample `ξ̂`.
    ///
    /// Stationarity gives `(2λI − H) ξ* = ∇_ξ f(x, 0) + 2λ ξ̂` with `H` the
    /// `ξ`-Hessian of `f`. The least-squares Hessian is rank one and is
    /// inverted with Sherman–Morrison; the other families use a dense solve.
    pub fn inner_maximizer(&self, x: &[f64], lambda: f64, sample: &[f64]) -> Result<Vec<f64>> {
        self.check(x, sample)?;
        let threshold = self.concavity_threshold(x);
        if !(lambda > threshold + INNER_MAX_MARGIN) {
            return Err(Error::UnboundedInnerMax { lambda, threshold });
        }
        let mut rhs = vec![0.0; self.m];
        let zero = vec![0.0; self.m];
        self.grad_xi_into(x, &zero, &mut rhs);
        linalg::axpy(2.0 * lambda, sample, &mut rhs);

        match &self.params {
            Params::LeastSquares { a } => {
                // (2λI − 2a vvᵀ)⁻¹ = (1/2λ) (I + a vvᵀ / (λ − a‖v‖²))
                let v = self.ls_direction(x);
                let c = a * linalg::norm_sq(&v);
                let coef = a * linalg::dot(&v, &rhs) / (lambda - c);
                Ok(rhs
                    .iter()
                    .zip(&v)
                    .map(|(r, vi)| (r + coef * vi) / (2.0 * lambda))
                    .collect())
            }
            _ => {
                let h = self.xi_hessian(x)?;
                let system = DMatrix::<f64>::identity(self.m, self.m) * (2.0 * lambda) - h;
                linalg::solve(system, &rhs).ok_or(Error::UnboundedInnerMax { lambda, threshold })
            }
        }
    }
}

/// `g_k(x, λ, ξ) = f(x, ξ) − λ ‖ξ − ξ̂_k‖²` for one sample `ξ̂_k`.
#[derive(Debug, Clone, Copy)]
pub struct SampleFunction<'a> {
    pub objective: &'a Objective,
    pub sample: &'a [f64],
}

impl<'a> SampleFunction<'a> {
    pub fn new(objective: &'a Objective, sample: &'a [f64]) -> Result<Self> {
        check_len("sample", objective.dim_xi(), sample.len())?;
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("sample has non-finite entries".into()));
        }
        Ok(Self { objective, sample })
    }

    fn check(&self, x: &[f64], lambda: f64, xi: &[f64]) -> Result<()> {
        if lambda < 0.0 {
            return Err(Error::NegativeMultiplier(lambda));
        }
        self.objective.check(x, xi)
    }

    pub fn value(&self, x: &[f64], lambda: f64, xi: &[f64]) -> Result<f64> {
        self.check(x, lambda, xi)?;
        Ok(self.objective.f_unchecked(x, xi) - lambda * linalg::dist_sq(xi, self.sample))
    }

    pub fn grad_x(&self, x: &[f64], lambda: f64, xi: &[f64]) -> Result<Vec<f64>> {
        self.check(x, lambda, xi)?;
        self.objective.grad_x(x, xi)
    }

    pub fn grad_lambda(&self, x: &[f64], lambda: f64, xi: &[f64]) -> Result<f64> {
        self.check(x, lambda, xi)?;
        Ok(-linalg::dist_sq(xi, self.sample))
    }

    pub fn grad_xi(&self, x: &[f64], lambda: f64, xi: &[f64]) -> Result<Vec<f64>> {
        self.check(x, lambda, xi)?;
        let mut out = self.objective.grad_xi(x, xi)?;
        for ((o, a), b) in out.iter_mut().zip(xi).zip(self.sample) {
            *o -= 2.0 * lambda * (a - b);
        }
        Ok(out)
    }

    /// `max_ξ g_k(x, λ, ξ)` via [`Objective::inner_maximizer`].
    pub fn max_value(&self, x: &[f64], lambda: f64) -> Result<f64> {
        let xi = self.objective.inner_maximizer(x, lambda, self.sample)?;
        self.value(x, lambda, &xi)
    }
}
