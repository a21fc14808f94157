//! Small dense symmetric eigensolver (cyclic Jacobi) and helpers for the
//! per-state curvature pencils.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("Jacobi eigensolver did not converge in {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
}

pub const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix (ascending), by cyclic Jacobi rotations.
///
/// Only the lower triangle's symmetric part is used.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>, LinalgError> {
    jacobi(a, false).map(|(w, _)| w)
}

/// Eigenvalues (ascending) and the matching orthonormal eigenvectors as columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), LinalgError> {
    jacobi(a, true).map(|(w, v)| (w, v.expect("vectors requested")))
}

fn jacobi(
    a: &DMatrix<f64>,
    vectors: bool,
) -> Result<(Vec<f64>, Option<DMatrix<f64>>), LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::NotSquare(n, a.ncols()));
    }
    let mut m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut v = vectors.then(|| DMatrix::<f64>::identity(n, n));
    let frob: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= 1 || frob == 0.0 {
        return Ok(sorted((0..n).map(|i| m[(i, i)]).collect(), v));
    }
    for _sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * frob {
            return Ok(sorted((0..n).map(|i| m[(i, i)]).collect(), v));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    Err(LinalgError::NoConvergence(MAX_SWEEPS))
}

fn sorted(w: Vec<f64>, v: Option<DMatrix<f64>>) -> (Vec<f64>, Option<DMatrix<f64>>) {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[a].total_cmp(&w[b]));
    let values = order.iter().map(|&k| w[k]).collect();
    let vectors = v.map(|v| DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, order[j])]));
    (values, vectors)
}

/// Orthonormal basis of the complement of the constant vector in `R^s`
/// (Helmert columns), as an `s × (s-1)` matrix.
pub fn helmert_basis(s: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(s, s.saturating_sub(1));
    for k in 1..s {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[(i, k - 1)] = 1.0 / norm;
        }
        q[(k, k - 1)] = -(k as f64) / norm;
    }
    q
}

/// Largest absolute row sum, a Gershgorin bound on the spectral radius.
pub fn gershgorin_radius(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
