//! Small dense matrix helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("singular Jacobian: |det| = {det:e} (floor {floor:e})")]
    SingularJacobian { det: f64, floor: f64 },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
}

/// Inverse by LU with partial pivoting. Fails when `|det J| < det_floor`.
pub fn jacobian_inverse(j: &Matrix, det_floor: f64) -> Result<Matrix, LinalgError> {
    inverse_with_det(j, det_floor).map(|(inv, _)| inv)
}

/// Like [`jacobian_inverse`] but also hands back the determinant.
pub fn inverse_with_det(j: &Matrix, det_floor: f64) -> Result<(Matrix, f64), LinalgError> {
    if !j.is_square() {
        return Err(LinalgError::NotSquare {
            rows: j.nrows(),
            cols: j.ncols(),
        });
    }
    let lu = j.clone().lu();
    let det = lu.determinant();
    if !(det.abs() >= det_floor) || det == 0.0 {
        return Err(LinalgError::SingularJacobian {
            det,
            floor: det_floor,
        });
    }
    let inv = lu.try_inverse().ok_or(LinalgError::SingularJacobian {
        det,
        floor: det_floor,
    })?;
    Ok((inv, det))
}

/// Operator norm induced by the Euclidean vector norm.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |acc, s| acc.max(*s))
}
