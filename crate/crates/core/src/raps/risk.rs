use nalgebra::{DMatrix, DVector};

use crate::error::{NavError, Result};
use crate::linalg::{spd_inverse, spd_solve, symmetrize};

/// Zero-mean Gaussian prior on the error state, kept in both forms.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrior {
    pub covariance: DMatrix<f64>,
    pub information: DMatrix<f64>,
}

impl GaussianPrior {
    pub fn from_covariance(covariance: DMatrix<f64>) -> Result<Self> {
        let information = spd_inverse(&covariance, "prior covariance")?;
        Ok(GaussianPrior { covariance: symmetrize(&covariance), information })
    }

    pub fn from_information(information: DMatrix<f64>) -> Result<Self> {
        let covariance = spd_inverse(&information, "prior information")?;
        Ok(GaussianPrior { covariance, information: symmetrize(&information) })
    }

    pub fn dim(&self) -> usize {
        self.information.nrows()
    }
}

fn check_shapes(
    tau: &DVector<f64>,
    dz: Option<&DVector<f64>>,
    h: &DMatrix<f64>,
    var: &DVector<f64>,
    n: usize,
) -> Result<()> {
    let m = h.nrows();
    if tau.len() != m || var.len() != m || dz.is_some_and(|z| z.len() != m) || h.ncols() != n {
        return Err(NavError::Dimension(format!(
            "H {}x{}, tau {}, var {}, prior {n}",
            m,
            h.ncols(),
            tau.len(),
            var.len()
        )));
    }
    Ok(())
}

/// `J^- + Hᵀ diag(tau / sigma^2) H`.
pub fn posterior_information(
    h: &DMatrix<f64>,
    tau: &DVector<f64>,
    var: &DVector<f64>,
    j_prior: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_shapes(tau, None, h, var, j_prior.nrows())?;
    let w = tau.component_div(var);
    let mut hw = h.clone();
    for (i, mut row) in hw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    Ok(symmetrize(&(j_prior + h.transpose() * hw)))
}

pub(crate) fn weighted_sq_residuals(
    dx: &DVector<f64>,
    dz: &DVector<f64>,
    h: &DMatrix<f64>,
    var: &DVector<f64>,
) -> DVector<f64> {
    let r = dz - h * dx;
    r.component_mul(&r).component_div(var)
}

pub(crate) fn risk_with_information(
    dx: &DVector<f64>,
    tau: &DVector<f64>,
    dz: &DVector<f64>,
    h: &DMatrix<f64>,
    j_prior: &DMatrix<f64>,
    var: &DVector<f64>,
) -> f64 {
    (dx.transpose() * j_prior * dx)[0] + tau.dot(&weighted_sq_residuals(dx, dz, h, var))
}

/// `‖dx‖²_{P⁻} + Σ tau_i (dz_i - h_i dx)² / sigma_i²`.
pub fn compute_risk(
    dx: &DVector<f64>,
    tau: &DVector<f64>,
    dz: &DVector<f64>,
    h: &DMatrix<f64>,
    p_prior: &DMatrix<f64>,
    var: &DVector<f64>,
) -> Result<f64> {
    check_shapes(tau, Some(dz), h, var, p_prior.nrows())?;
    if dx.len() != p_prior.nrows() {
        return Err(NavError::Dimension(format!("dx of size {} for prior {}", dx.len(), p_prior.nrows())));
    }
    let mahal = dx.dot(&spd_solve(p_prior, dx, "prior covariance")?);
    Ok(mahal + tau.dot(&weighted_sq_residuals(dx, dz, h, var)))
}

pub(crate) fn wls_with_information(
    tau: &DVector<f64>,
    dz: &DVector<f64>,
    h: &DMatrix<f64>,
    j_prior: &DMatrix<f64>,
    var: &DVector<f64>,
) -> Result<DVector<f64>> {
    let info = posterior_information(h, tau, var, j_prior)?;
    let rhs = h.transpose() * tau.component_div(var).component_mul(dz);
    spd_solve(&info, &rhs, "posterior information")
}

/// Minimiser of the risk over `dx` at fixed weights.
pub fn solve_wls(
    tau: &DVector<f64>,
    dz: &DVector<f64>,
    h: &DMatrix<f64>,
    p_prior: &DMatrix<f64>,
    var: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_shapes(tau, Some(dz), h, var, p_prior.nrows())?;
    let j = spd_inverse(p_prior, "prior covariance")?;
    wls_with_information(tau, dz, h, &j, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn scalar_examples() {
        assert_eq!(posterior_information(&s(1.0), &v(1.0), &v(1.0), &s(2.0)).unwrap()[(0, 0)], 3.0);
        assert_eq!(posterior_information(&s(1.0), &v(0.0), &v(1.0), &s(2.0)).unwrap()[(0, 0)], 2.0);
        assert!((compute_risk(&v(1.0), &v(1.0), &v(2.0), &s(1.0), &s(1.0), &v(1.0)).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(compute_risk(&v(0.0), &v(0.0), &v(2.0), &s(1.0), &s(1.0), &v(1.0)).unwrap(), 0.0);
        assert!((solve_wls(&v(1.0), &v(2.0), &s(1.0), &s(1.0), &v(1.0)).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_prior_rejected() {
        assert!(compute_risk(&v(1.0), &v(1.0), &v(2.0), &s(1.0), &s(0.0), &v(1.0)).is_err());
    }

    #[test]
    fn wls_gradient_vanishes() {
        let h = DMatrix::from_row_slice(4, 3, &[1.0, 0.2, -0.4, 0.3, 1.1, 0.0, -0.5, 0.7, 0.9, 0.6, -0.1, 1.3]);
        let p = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        let dz = DVector::from_column_slice(&[0.4, -1.2, 2.5, 0.3]);
        let var = DVector::from_column_slice(&[0.5, 1.0, 0.2, 2.0]);
        let tau = DVector::from_column_slice(&[1.0, 0.3, 0.8, 0.0]);
        let dx = solve_wls(&tau, &dz, &h, &p, &var).unwrap();
        let e = 1e-5;
        for k in 0..3 {
            let mut a = dx.clone();
            let mut b = dx.clone();
            a[k] += e;
            b[k] -= e;
            let g = (compute_risk(&a, &tau, &dz, &h, &p, &var).unwrap()
                - compute_risk(&b, &tau, &dz, &h, &p, &var).unwrap())
                / (2.0 * e);
            assert!(g.abs() < 1e-8, "gradient {g}");
        }
    }

    #[test]
    fn risk_monotone_in_tau() {
        let h = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let dz = DVector::from_column_slice(&[1.0, -3.0]);
        let var = DVector::from_column_slice(&[1.0, 1.0]);
        let dx = v(0.2);
        let lo = compute_risk(&dx, &DVector::from_column_slice(&[0.2, 0.5]), &dz, &h, &s(1.0), &var).unwrap();
        let hi = compute_risk(&dx, &DVector::from_column_slice(&[0.2, 0.6]), &dz, &h, &s(1.0), &var).unwrap();
        assert!(hi >= lo);
    }
}
