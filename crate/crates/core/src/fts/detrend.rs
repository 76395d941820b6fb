use nalgebra::DMatrix;

use super::grid::VolumeSeries;
use crate::error::{FcovError, Result};

/// Orthonormal basis of polynomials of degree `<= order` in the time index,
/// as an `n x (order + 1)` matrix. Built from the rescaled index on
/// `[-1, 1]` by two passes of modified Gram-Schmidt.
pub fn orthonormal_polynomial_design(n: usize, order: usize) -> Result<DMatrix<f64>> {
    if n <= order + 1 {
        return Err(FcovError::Underdetermined { n, order });
    }
    let p = order + 1;
    let scale = (n - 1) as f64;
    let tau: Vec<f64> = (0..n).map(|t| 2.0 * t as f64 / scale - 1.0).collect();
    let mut q = DMatrix::<f64>::zeros(n, p);
    for k in 0..p {
        // start from tau * q_{k-1}: a three-term-recurrence style seed that
        // stays well conditioned, unlike raw powers
        let mut col: Vec<f64> = if k == 0 {
            vec![1.0; n]
        } else {
            (0..n).map(|t| tau[t] * q[(t, k - 1)]).collect()
        };
        for _pass in 0..2 {
            for j in 0..k {
                let proj: f64 = (0..n).map(|t| col[t] * q[(t, j)]).sum();
                for t in 0..n {
                    col[t] -= proj * q[(t, j)];
                }
            }
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= f64::EPSILON * n as f64 {
            return Err(FcovError::Underdetermined { n, order });
        }
        for t in 0..n {
            q[(t, k)] = col[t] / norm;
        }
    }
    Ok(q)
}

/// Least-squares polynomial detrend of every column of `y` (rows = time).
pub fn detrend_columns(y: &DMatrix<f64>, order: usize) -> Result<DMatrix<f64>> {
    let q = orthonormal_polynomial_design(y.nrows(), order)?;
    let coef = q.transpose() * y;
    Ok(y - q * coef)
}

/// Remove a per-voxel polynomial trend of the given order in time.
pub fn detrend_polynomial(x: &VolumeSeries, order: usize) -> Result<VolumeSeries> {
    VolumeSeries::new(detrend_columns(x.values(), order)?, x.dims())
}
