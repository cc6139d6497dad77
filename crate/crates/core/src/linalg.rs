//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{NavError, Result};

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(NavError::Singular(what))?;
    Ok(symmetrize(&chol.inverse()))
}

pub fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    let chol = m.clone().cholesky().ok_or(NavError::Singular(what))?;
    Ok(chol.solve(rhs))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// PSD within the tolerance `-tol * trace` used throughout the filter.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    let tr = m.trace().abs().max(f64::MIN_POSITIVE);
    min_eigenvalue(m) >= -tol * tr
}

pub fn all_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> bool {
    values.into_iter().all(|v| v.is_finite())
}
