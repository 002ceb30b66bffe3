use alloc::format;
use alloc::vec::Vec;

use super::matrix::Matrix;
use crate::error::{shape_err, Error, Result};

/// Convergence threshold on the largest off-diagonal magnitude, relative to
/// `max(1, ‖A‖_F)`.
pub const EIGEN_TOLERANCE: f64 = 1e-12;
pub const EIGEN_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix. `vectors` holds one eigenvector per
/// column, in the same (descending) order as `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i)
    }
}

/// Cyclic Jacobi eigendecomposition.
///
/// Eigenvalues come back in descending order (ties keep diagonal order). Each
/// eigenvector is signed so that its largest-magnitude entry is positive,
/// which makes downstream projections reproducible.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(shape_err("symmetric_eigen", "square matrix", format!("{}x{}", a.rows(), a.cols())));
    }
    a.ensure_finite("symmetric_eigen input")?;
    let scale = a.as_slice().iter().fold(1.0f64, |m, v| m.max(libm::fabs(*v)));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max(libm::fabs(a.get(i, j) - a.get(j, i)));
        }
    }
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::NotSymmetric(asym));
    }

    // Work on an exactly symmetric copy.
    let mut w = Matrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let mut v = Matrix::identity(n);
    let tol = EIGEN_TOLERANCE * w.frobenius_norm().max(1.0);

    let mut converged = false;
    for _ in 0..EIGEN_MAX_SWEEPS {
        if max_off_diagonal(&w) < tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w.get(p, q);
                if libm::fabs(apq) < tol {
                    continue;
                }
                let (c, s) = rotation(w.get(p, p), w.get(q, q), apq);
                rotate(&mut w, &mut v, p, q, c, s);
            }
        }
    }
    if !converged && max_off_diagonal(&w) >= tol {
        return Err(Error::NoConvergence(EIGEN_MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps diagonal order among equal eigenvalues
    order.sort_by(|&i, &j| w.get(j, j).total_cmp(&w.get(i, i)));
    let values = order.iter().map(|&i| w.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut best = 0;
        for r in 0..n {
            if libm::fabs(v.get(r, src)) > libm::fabs(v.get(best, src)) {
                best = r;
            }
        }
        let sign = if v.get(best, src) < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors.set(r, col, sign * v.get(r, src));
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn max_off_diagonal(w: &Matrix) -> f64 {
    let n = w.rows();
    let mut m = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            m = m.max(libm::fabs(w.get(i, j)));
        }
    }
    m
}

/// (cos, sin) of the rotation that annihilates `apq`.
fn rotation(app: f64, aqq: f64, apq: f64) -> (f64, f64) {
    let theta = (aqq - app) / (2.0 * apq);
    let t = if libm::fabs(theta) > 1e150 {
        0.5 / theta
    } else {
        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
        sign / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0))
    };
    let c = 1.0 / libm::sqrt(t * t + 1.0);
    (c, t * c)
}

/// `W ← JᵀWJ`, `V ← VJ` for the plane rotation J acting on (p, q).
fn rotate(w: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = w.rows();
    for k in 0..n {
        let wkp = w.get(k, p);
        let wkq = w.get(k, q);
        w.set(k, p, c * wkp - s * wkq);
        w.set(k, q, s * wkp + c * wkq);
    }
    for k in 0..n {
        let wpk = w.get(p, k);
        let wqk = w.get(q, k);
        w.set(p, k, c * wpk - s * wqk);
        w.set(q, k, s * wpk + c * wqk);
    }
    w.set(p, q, 0.0);
    w.set(q, p, 0.0);
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}
