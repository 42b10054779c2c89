//! Per-agent feasible sets `C_i ⊂ R^d × R` and Euclidean projections onto
//! them. The stacked set is the product `C = Π C_i`, so every agent projects
//! its own `(x_i, λ_i)` independently.

use crate::error::{Error, Result};
use crate::linalg;
use crate::objectives::{Objective, ObjectiveKind};

const BISECTION_TOL: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;

/// Default boundary tolerance for [`FeasibleRegime::contains`].
pub const DEFAULT_CONTAINS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibleRegime {
    /// `R^d × R_{≥0}`
    ConvexConcave,
    /// `R^d × {λ ≥ λ_floor}` with `λ_floor = λ_max(Q)`
    QuadraticXi { lambda_floor: f64 },
    /// `{(x, λ) : λ ≥ a (‖x_{1:m−1}‖² + 1)}`
    LeastSquares { a: f64 },
}

impl FeasibleRegime {
    pub fn for_objective(obj: &Objective) -> Self {
        match obj.kind() {
            ObjectiveKind::ConvexConcave => FeasibleRegime::ConvexConcave,
            ObjectiveKind::QuadraticXi => FeasibleRegime::QuadraticXi {
                lambda_floor: obj.lambda_max_q().expect("quadratic objective"),
            },
            ObjectiveKind::LeastSquares => FeasibleRegime::LeastSquares {
                a: obj.least_squares_weight().expect("least-squares objective"),
            },
        }
    }

    pub fn kind(&self) -> ObjectiveKind {
        match self {
            FeasibleRegime::ConvexConcave => ObjectiveKind::ConvexConcave,
            FeasibleRegime::QuadraticXi { .. } => ObjectiveKind::QuadraticXi,
            FeasibleRegime::LeastSquares { .. } => ObjectiveKind::LeastSquares,
        }
    }

    /// True iff `(x, λ)` lies within Euclidean distance `tol` of `C_i`.
    pub fn contains(&self, x: &[f64], lambda: f64, tol: f64) -> bool {
        if !lambda.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match *self {
            FeasibleRegime::ConvexConcave => lambda >= -tol,
            FeasibleRegime::QuadraticXi { lambda_floor } => lambda >= lambda_floor - tol,
            FeasibleRegime::LeastSquares { a } => {
                let bound = a * (linalg::norm_sq(&x[..x.len() - 1]) + 1.0);
                if lambda >= bound {
                    return true;
                }
                let mut xp = x.to_vec();
                match project_least_squares(a, &mut xp, lambda) {
                    Ok(lp) => {
                        let d2 = linalg::dist_sq(&xp, x) + (lp - lambda).powi(2);
                        d2.sqrt() <= tol
                    }
                    Err(_) => false,
                }
            }
        }
    }

    /// Euclidean projection of `(x, λ)` onto `C_i`. Feasible inputs are
    /// returned unchanged.
    pub fn project(&self, x: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
        let mut out = x.to_vec();
        let l = self.project_in_place(&mut out, lambda)?;
        Ok((out, l))
    }

    /// In-place variant of [`FeasibleRegime::project`]; returns the projected `λ`.
    pub fn project_in_place(&self, x: &mut [f64], lambda: f64) -> Result<f64> {
        match *self {
            FeasibleRegime::ConvexConcave => Ok(lambda.max(0.0)),
            FeasibleRegime::QuadraticXi { lambda_floor } => Ok(lambda.max(lambda_floor)),
            FeasibleRegime::LeastSquares { a } => {
                if x.is_empty() {
                    return Err(Error::DimensionMismatch {
                        context: "least-squares projection",
                        expected: 2,
                        got: 0,
                    });
                }
                project_least_squares(a, x, lambda)
            }
        }
    }

    /// The same regime with the `λ` bound raised by `margin`.
    pub fn with_margin(&self, margin: f64) -> ShiftedRegime {
        ShiftedRegime {
            base: *self,
            margin,
        }
    }

    /// Project every agent block of a stacked `(x_v, λ_v)` pair.
    pub fn project_stacked(&self, x_v: &mut [f64], lambda_v: &mut [f64]) -> Result<()> {
        let n = lambda_v.len();
        if n == 0 || x_v.len() % n != 0 {
            return Err(Error::DimensionMismatch {
                context: "stacked projection",
                expected: n,
                got: x_v.len(),
            });
        }
        let d = x_v.len() / n;
        for (xi, li) in x_v.chunks_mut(d).zip(lambda_v.iter_mut()) {
            *li = self.project_in_place(xi, *li)?;
        }
        Ok(())
    }
}

/// A regime whose `λ` lower bound is raised by a fixed margin, as used by the
/// centralized oracle to stay strictly inside the concavity region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedRegime {
    base: FeasibleRegime,
    margin: f64,
}

impl ShiftedRegime {
    pub fn project_in_place(&self, x: &mut [f64], lambda: f64) -> Result<f64> {
        // {λ ≥ b(x) + μ} is the translate of {λ ≥ b(x)} by μ along λ.
        Ok(self.base.project_in_place(x, lambda - self.margin)? + self.margin)
    }

    pub fn contains(&self, x: &[f64], lambda: f64, tol: f64) -> bool {
        self.base.contains(x, lambda - self.margin, tol)
    }
}

/// Projection onto `{(x, λ) : λ ≥ a(‖u‖² + 1)}`, `u = x_{1:m−1}`. The last
/// component of `x` is not constrained and is never modified.
///
/// With multiplier `μ > 0` the KKT system gives `u(μ) = u₀ / (1 + 2aμ)` and
/// `λ(μ) = λ₀ + μ`, where `μ` is the root of the strictly increasing
/// `φ(μ) = λ₀ + μ − a(‖u₀‖² / (1 + 2aμ)² + 1)`. The root is bracketed and
/// bisected, then polished with Newton steps from the left (φ is concave, so
/// Newton from below stays below the root).
fn project_least_squares(a: f64, x: &mut [f64], lambda0: f64) -> Result<f64> {
    let m = x.len();
    let u = &mut x[..m - 1];
    let u0_sq = linalg::norm_sq(u);
    let bound = a * (u0_sq + 1.0);
    if lambda0 >= bound {
        return Ok(lambda0);
    }
    if !lambda0.is_finite() || !u0_sq.is_finite() {
        return Err(Error::Projection(format!(
            "non-finite input (lambda {lambda0}, |u|^2 {u0_sq})"
        )));
    }
    let phi = |mu: f64| {
        let s = 1.0 + 2.0 * a * mu;
        lambda0 + mu - a * (u0_sq / (s * s) + 1.0)
    };
    let dphi = |mu: f64| {
        let s = 1.0 + 2.0 * a * mu;
        1.0 + 4.0 * a * a * u0_sq / (s * s * s)
    };
    let mut lo = 0.0_f64;
    let mut hi = bound - lambda0 + 1.0;
    if !(phi(lo) < 0.0 && phi(hi) > 0.0) {
        return Err(Error::Projection(format!(
            "failed to bracket multiplier in [{lo}, {hi}]"
        )));
    }
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut mu = lo;
    for _ in 0..3 {
        let next = mu - phi(mu) / dphi(mu);
        if !(next > mu && next <= hi) {
            break;
        }
        mu = next;
    }
    let scale = 1.0 / (1.0 + 2.0 * a * mu);
    for ui in u.iter_mut() {
        *ui *= scale;
    }
    Ok(lambda0 + mu)
}
