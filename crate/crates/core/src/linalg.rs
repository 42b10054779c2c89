//! Small dense helpers over `f64` slices.
//!
//! Stacked agent vectors are plain `Vec<f64>`; the per-sample matrices are
//! tiny, so nothing here tries to be clever.

use nalgebra::{DMatrix, DVector};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Row-major `rows x cols` matrix times vector.
pub fn mat_vec(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.ncols(), v.len());
    debug_assert_eq!(m.nrows(), out.len());
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, vj) in v.iter().enumerate() {
            acc += m[(i, j)] * vj;
        }
        *o = acc;
    }
}

/// Transposed product `mᵀ v`.
pub fn mat_t_vec(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.nrows(), v.len());
    debug_assert_eq!(m.ncols(), out.len());
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, vi) in v.iter().enumerate() {
            acc += m[(i, j)] * vi;
        }
        *o = acc;
    }
}

/// `vᵀ m v` for square `m`.
pub fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, vi) in v.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            acc += vi * m[(i, j)] * vj;
        }
    }
    acc
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = 1.0 + m.amax();
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * scale))
}

/// Cholesky-based definiteness test. `shift` is added to the diagonal, so a
/// small positive shift turns this into a semidefiniteness test.
pub fn is_positive_definite(m: &DMatrix<f64>, shift: f64) -> bool {
    let shifted = m + DMatrix::<f64>::identity(m.nrows(), m.ncols()) * shift;
    nalgebra::Cholesky::new(shifted).is_some()
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration.
///
/// Iteration runs from the normalized all-ones vector and from every
/// coordinate vector; the largest Rayleigh quotient wins. Any single
/// deterministic start can be orthogonal to the top eigenspace, but not all
/// of these can.
pub fn lambda_max_power(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> f64 {
    let dim = m.nrows();
    if dim == 0 {
        return 0.0;
    }
    let mut starts = Vec::with_capacity(dim + 1);
    starts.push(vec![1.0 / (dim as f64).sqrt(); dim]);
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        starts.push(e);
    }
    starts
        .into_iter()
        .map(|v| power_from(m, v, tol, max_iter))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn power_from(m: &DMatrix<f64>, mut v: Vec<f64>, tol: f64, max_iter: usize) -> f64 {
    let dim = v.len();
    let mut w = vec![0.0; dim];
    let mut rayleigh = 0.0;
    for _ in 0..max_iter {
        mat_vec(m, &v, &mut w);
        let next = dot(&v, &w);
        let wn = norm(&w);
        if wn == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        let done = (next - rayleigh).abs() <= tol * (1.0 + next.abs());
        rayleigh = next;
        if done {
            break;
        }
    }
    mat_vec(m, &v, &mut w);
    dot(&v, &w)
}

/// Solve `a x = b` for a small dense system.
pub fn solve(a: DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let rhs = DVector::from_column_slice(b);
    a.lu().solve(&rhs).map(|x| x.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_handles_start_orthogonal_to_top_eigvec() {
        // (1,1) is the eigenvector of the smaller eigenvalue 1; the top one is 3.
        let m = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let top = lambda_max_power(&m, 1e-12, 10_000);
        assert!((top - 3.0).abs() < 1e-10, "{top}");
    }

    #[test]
    fn diag_read_off() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0]);
        assert!((lambda_max_power(&m, 1e-10, 10_000) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn definiteness_checks() {
        let psd = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(!is_positive_definite(&psd, 0.0) || psd.determinant().abs() < 1e-12);
        assert!(is_positive_definite(&psd, 1e-10));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(!is_positive_definite(&indefinite, 1e-10));
    }
}
