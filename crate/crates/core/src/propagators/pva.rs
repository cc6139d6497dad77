use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::Propagator;
use crate::error::{NavError, Result};
use crate::ins::ImuSample;
use crate::linalg::{is_psd, symmetrize};

pub const PVA_DIM: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PvaConfig {
    /// White-jerk spectral density (m²/s⁵), per axis.
    pub jerk_psd: f64,
    /// Initial acceleration standard deviation (m/s²).
    pub accel_sigma: f64,
}

impl Default for PvaConfig {
    fn default() -> Self {
        PvaConfig { jerk_psd: 1.0, accel_sigma: 1.0 }
    }
}

/// Constant-acceleration kinematics driven by white jerk. The IMU stream is
/// ignored; propagation is applied in one step when the prior is requested.
#[derive(Clone, Debug)]
pub struct PvaPropagator {
    t: f64,
    target: f64,
    position: Vector3<f64>,
    velocity: Vector3<f64>,
    accel: Vector3<f64>,
    covariance: DMatrix<f64>,
    jerk_psd: f64,
}

impl PvaPropagator {
    pub fn new(
        t: f64,
        position: Vector3<f64>,
        velocity: Vector3<f64>,
        covariance: DMatrix<f64>,
        cfg: &PvaConfig,
    ) -> Result<Self> {
        if covariance.shape() != (PVA_DIM, PVA_DIM) {
            return Err(NavError::Dimension("PVA covariance must be 9x9".into()));
        }
        if !(cfg.jerk_psd >= 0.0) {
            return Err(NavError::invalid("jerk spectral density must be non-negative"));
        }
        Ok(PvaPropagator {
            t,
            target: t,
            position,
            velocity,
            accel: Vector3::zeros(),
            covariance,
            jerk_psd: cfg.jerk_psd,
        })
    }

    fn transition(dt: f64, q: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let i = Matrix3::identity();
        let mut f = DMatrix::identity(PVA_DIM, PVA_DIM);
        let mut qd = DMatrix::zeros(PVA_DIM, PVA_DIM);
        let coef = [
            [dt.powi(5) / 20.0, dt.powi(4) / 8.0, dt.powi(3) / 6.0],
            [dt.powi(4) / 8.0, dt.powi(3) / 3.0, dt.powi(2) / 2.0],
            [dt.powi(3) / 6.0, dt.powi(2) / 2.0, dt],
        ];
        for (r, row) in coef.iter().enumerate() {
            for (c, k) in row.iter().enumerate() {
                qd.view_mut((3 * r, 3 * c), (3, 3)).copy_from(&(i * (q * k)));
            }
        }
        f.view_mut((0, 3), (3, 3)).copy_from(&(i * dt));
        f.view_mut((0, 6), (3, 3)).copy_from(&(i * (0.5 * dt * dt)));
        f.view_mut((3, 6), (3, 3)).copy_from(&(i * dt));
        (f, qd)
    }
}

impl Propagator for PvaPropagator {
    fn name(&self) -> &'static str {
        "pva"
    }

    fn dim(&self) -> usize {
        PVA_DIM
    }

    fn time(&self) -> f64 {
        self.target
    }

    fn propagate(&mut self, _s: &ImuSample, t_to: f64) -> Result<()> {
        if t_to > self.target {
            self.target = t_to;
        }
        Ok(())
    }

    fn prior_covariance(&mut self) -> Result<DMatrix<f64>> {
        let dt = self.target - self.t;
        if dt > 0.0 {
            let (f, qd) = Self::transition(dt, self.jerk_psd);
            self.position += self.velocity * dt + self.accel * (0.5 * dt * dt);
            self.velocity += self.accel * dt;
            self.covariance = symmetrize(&(&f * &self.covariance * f.transpose() + qd));
            self.t = self.target;
        }
        if !is_psd(&self.covariance, 1e-9) {
            return Err(NavError::Divergence("PVA covariance is not positive semidefinite".into()));
        }
        Ok(self.covariance.clone())
    }

    fn position(&self) -> Vector3<f64> {
        self.position
    }

    fn velocity(&self) -> Vector3<f64> {
        self.velocity
    }

    fn correct(&mut self, dx: &DVector<f64>, covariance: DMatrix<f64>) -> Result<u32> {
        if dx.len() != PVA_DIM || covariance.shape() != (PVA_DIM, PVA_DIM) {
            return Err(NavError::Dimension("PVA correction must be 9-dimensional".into()));
        }
        if !dx.iter().all(|v| v.is_finite()) {
            return Err(NavError::NonFinite("PVA correction"));
        }
        self.position += dx.fixed_rows::<3>(0);
        self.velocity += dx.fixed_rows::<3>(3);
        self.accel += dx.fixed_rows::<3>(6);
        self.covariance = covariance;
        Ok(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_velocity_is_exact() {
        let mut p = PvaPropagator::new(
            0.0,
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(1.0, 0.0, -2.0),
            DMatrix::identity(9, 9),
            &PvaConfig::default(),
        )
        .unwrap();
        let s = ImuSample { t: 0.0, specific_force: Vector3::zeros(), angular_rate: Vector3::zeros() };
        p.propagate(&s, 0.5).unwrap();
        p.propagate(&s, 2.0).unwrap();
        p.prior_covariance().unwrap();
        assert!((p.position() - Vector3::new(3.0, 2.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn jerk_noise_composes_over_split_intervals() {
        let (f1, q1) = PvaPropagator::transition(0.4, 2.0);
        let (f2, q2) = PvaPropagator::transition(0.6, 2.0);
        let (f, q) = PvaPropagator::transition(1.0, 2.0);
        assert!((&f2 * &f1 - &f).amax() < 1e-14);
        assert!((&f2 * q1 * f2.transpose() + q2 - q).amax() < 1e-14);
    }
}
