use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spec::PerformanceSpec;
use crate::error::{NavError, Result};

/// Linear information constraint `G tau >= d` with infeasibility gaps `L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSystem {
    /// `n_c x m`, `G[j][i] = h_{i,k_j}^2 / sigma_i^2`.
    pub g: DMatrix<f64>,
    /// `J_l - diag(J^-)` over the constrained components.
    pub d: DVector<f64>,
    /// `max(d - G 1, 0)`.
    pub l: DVector<f64>,
}

impl ConstraintSystem {
    pub fn rows(&self) -> usize {
        self.g.nrows()
    }

    pub fn measurements(&self) -> usize {
        self.g.ncols()
    }

    /// Information available on row `j` with every measurement enabled.
    pub fn full_information(&self, j: usize) -> f64 {
        self.g.row(j).sum()
    }

    /// Row `j` cannot be met even at `tau = 1` (includes the boundary `G 1 = d`).
    pub fn is_soft(&self, j: usize) -> bool {
        self.full_information(j) <= self.d[j]
    }

    /// Row `j` is a hard, non-vacuous constraint `g_j tau >= d_j`.
    pub fn is_hard(&self, j: usize) -> bool {
        !self.is_soft(j) && self.d[j] > 0.0
    }

    /// Every row is satisfiable with all measurements enabled.
    pub fn feasible(&self) -> bool {
        self.l.iter().all(|v| *v == 0.0)
    }
}

pub fn build_g_d(
    h: &DMatrix<f64>,
    var: &DVector<f64>,
    j_prior_diag: &DVector<f64>,
    spec: &PerformanceSpec,
) -> Result<ConstraintSystem> {
    spec.validate()?;
    let (m, n) = h.shape();
    if var.len() != m {
        return Err(NavError::Dimension(format!("{} variances for {} measurement rows", var.len(), m)));
    }
    if j_prior_diag.len() != n {
        return Err(NavError::Dimension(format!("prior information of size {} for {} states", j_prior_diag.len(), n)));
    }
    if let Some(k) = spec.components.iter().find(|k| **k >= n) {
        return Err(NavError::Dimension(format!("constrained component {k} outside {n} states")));
    }
    if var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(NavError::invalid("measurement variances must be positive"));
    }
    let nc = spec.len();
    let g = DMatrix::from_fn(nc, m, |j, i| h[(i, spec.components[j])].powi(2) / var[i]);
    let d = DVector::from_fn(nc, |j, _| spec.bounds[j] - j_prior_diag[spec.components[j]]);
    let l = DVector::from_fn(nc, |j, _| (d[j] - g.row(j).sum()).max(0.0));
    Ok(ConstraintSystem { g, d, l })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_arithmetic() {
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let spec = PerformanceSpec::custom(vec![1.0, 0.0], vec![0, 1]).unwrap();
        let cs = build_g_d(&h, &DVector::from_element(1, 4.0), &DVector::from_element(2, 0.5), &spec).unwrap();
        assert_eq!(cs.g, DMatrix::from_row_slice(2, 1, &[0.25, 0.0]));
        assert_eq!(cs.d, DVector::from_column_slice(&[0.5, -0.5]));
        assert_eq!(cs.l, DVector::from_column_slice(&[0.25, 0.0]));
        assert!(cs.is_soft(0));
        assert!(!cs.is_hard(1));
    }

    #[test]
    fn strong_prior_makes_constraint_vacuous() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let spec = PerformanceSpec::custom(vec![1.0, 2.0], vec![0, 1]).unwrap();
        let cs = build_g_d(&h, &DVector::from_element(2, 1.0), &DVector::from_element(2, 5.0), &spec).unwrap();
        assert!(cs.d.iter().all(|v| *v <= 0.0));
        assert!(cs.l.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let h = DMatrix::zeros(2, 3);
        let spec = PerformanceSpec::zero(3);
        assert!(build_g_d(&h, &DVector::from_element(3, 1.0), &DVector::zeros(3), &spec).is_err());
        assert!(build_g_d(&h, &DVector::from_element(2, 1.0), &DVector::zeros(2), &spec).is_err());
    }
}
