use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{NavError, Result};
use crate::gnss::{
    build_jacobian, build_noise, predict_residuals, AugmentedState, DdEpoch, NoiseModel, RowKind, SatKey, ROWS_PER_SAT,
};

/// One epoch linearized at the prior: `dz = H dchi + noise` with
/// `dchi = [dx (nav_dim); dN (m)]` and diagonal noise `var`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedEpoch {
    pub t: f64,
    pub dz: DVector<f64>,
    pub h: DMatrix<f64>,
    pub var: DVector<f64>,
    pub nav_dim: usize,
    pub sats: Vec<SatKey>,
    /// Prior position, anchor of the local frame for the spec.
    pub position: Vector3<f64>,
}

impl LinearizedEpoch {
    pub fn m(&self) -> usize {
        self.sats.len()
    }

    pub fn rows(&self) -> usize {
        self.dz.len()
    }

    pub fn row_kind(&self, i: usize) -> RowKind {
        RowKind::of_row(i)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        let rows = ROWS_PER_SAT * m;
        if self.dz.len() != rows || self.var.len() != rows || self.h.shape() != (rows, self.nav_dim + m) {
            return Err(NavError::Dimension(format!(
                "epoch with {m} satellites has dz {}, var {}, H {:?}",
                self.dz.len(),
                self.var.len(),
                self.h.shape()
            )));
        }
        if self.var.iter().any(|v| !(*v > 0.0)) {
            return Err(NavError::invalid("measurement variances must be positive"));
        }
        if !self.dz.iter().chain(self.h.iter()).all(|v| v.is_finite()) {
            return Err(NavError::NonFinite("linearized epoch"));
        }
        Ok(())
    }
}

/// Residuals, Jacobian and noise at `position`/`velocity` with zero prior
/// ambiguities, as used at every epoch in instantaneous mode.
pub fn linearize(
    dd: &DdEpoch,
    position: &Vector3<f64>,
    velocity: &Vector3<f64>,
    nav_dim: usize,
    nm: &NoiseModel,
) -> Result<LinearizedEpoch> {
    let chi = AugmentedState::new(*position, *velocity, dd.len(), nav_dim);
    let (dz, h) = if dd.is_empty() {
        (DVector::zeros(0), DMatrix::zeros(0, nav_dim))
    } else {
        (predict_residuals(&chi, dd)?, build_jacobian(&chi, dd)?)
    };
    Ok(LinearizedEpoch {
        t: dd.t,
        dz,
        h,
        var: build_noise(dd, nm),
        nav_dim,
        sats: dd.measurements.iter().map(|m| m.sat).collect(),
        position: *position,
    })
}
