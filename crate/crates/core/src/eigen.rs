//! Symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Adequate and dependency-free for the dimensions this toolkit needs
//! (embedding spaces up to a few hundred). Deterministic: the sweep order
//! is fixed, so results are bit-reproducible.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Eigenvalues (descending) and column-orthonormal eigenvectors of a
/// symmetric matrix, so that `cov * V = V * diag(lambda)`.
pub struct EigenDecomposition {
    /// Eigenvalues sorted in descending order.
    pub values: Vec<f64>,
    /// Eigenvectors as matrix columns, ordered like `values`.
    pub vectors: Tensor,
}

const SYMMETRY_TOLERANCE: f64 = 1e-9;
const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 50;

/// Jacobi eigendecomposition of a symmetric `[d x d]` matrix.
pub fn sym_eig(cov: &Tensor) -> Result<EigenDecomposition> {
    let shape = cov.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::dimension(format!("sym_eig expects a square matrix, got {shape:?}")));
    }
    let n = shape[0];
    for i in 0..n {
        for j in (i + 1)..n {
            if (cov.at(i, j) - cov.at(j, i)).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::contract(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    cov.at(i, j),
                    cov.at(j, i)
                )));
            }
        }
    }

    let mut a = cov.data().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    // Scale the convergence threshold with the matrix magnitude.
    let scale: f64 = a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())).max(1.0);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].abs();
            }
        }
        if off < OFF_DIAGONAL_TOLERANCE * scale {
            converged = true;
            break;
        }

        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta.abs() > 1e12 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                for i in 0..n {
                    if i != p && i != q {
                        let aip = a[i * n + p];
                        let aiq = a[i * n + q];
                        a[i * n + p] = aip - s * (aiq + tau * aip);
                        a[i * n + q] = aiq + s * (aip - tau * aiq);
                        a[p * n + i] = a[i * n + p];
                        a[q * n + i] = a[i * n + q];
                    }
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = vip - s * (viq + tau * vip);
                    v[i * n + q] = viq + s * (vip - tau * viq);
                }
            }
        }
    }
    if !converged {
        // One more check after the final sweep.
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].abs();
            }
        }
        if off >= OFF_DIAGONAL_TOLERANCE * scale {
            return Err(Error::numeric(format!(
                "Jacobi sweep did not converge in {MAX_SWEEPS} sweeps (residual {off:e})"
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j].partial_cmp(&a[i * n + i]).unwrap_or(std::cmp::Ordering::Equal)
    });

    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = v[row * n + src];
        }
    }

    Ok(EigenDecomposition { values, vectors: Tensor::from_vec(vec![n, n], vectors)? })
}
