use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};

use super::Propagator;
use crate::error::{NavError, Result};
use crate::estimators::flags;
use crate::frames::EarthModel;
use crate::ins::{
    apply_correction, mechanize, propagate_covariance, ErrorState, ImuNoiseSpec, ImuSample, Matrix15, NavState, ATT,
    ERROR_STATE_DIM,
};
use crate::linalg::is_psd;

#[derive(Clone, Debug)]
pub struct InsPropagator {
    pub nav: NavState,
    covariance: Matrix15,
    acc: crate::ins::StmAccumulator,
    noise: ImuNoiseSpec,
    earth: EarthModel,
}

impl InsPropagator {
    pub fn new(nav: NavState, covariance: Matrix15, noise: ImuNoiseSpec, earth: EarthModel) -> Result<Self> {
        nav.check()?;
        noise.validate()?;
        Ok(InsPropagator { nav, covariance, acc: Default::default(), noise, earth })
    }
}

impl Propagator for InsPropagator {
    fn name(&self) -> &'static str {
        "ins"
    }

    fn dim(&self) -> usize {
        ERROR_STATE_DIM
    }

    fn time(&self) -> f64 {
        self.nav.t
    }

    fn propagate(&mut self, s: &ImuSample, t_to: f64) -> Result<()> {
        let dt = t_to - self.nav.t;
        if dt <= 0.0 {
            return Ok(());
        }
        self.acc.step(&self.nav, s, &self.noise, dt, self.earth)?;
        self.nav = mechanize(&self.nav, s, dt, self.earth)?;
        Ok(())
    }

    fn prior_covariance(&mut self) -> Result<DMatrix<f64>> {
        self.covariance = propagate_covariance(&self.covariance, &self.acc)?;
        self.acc.reset();
        Ok(DMatrix::from_column_slice(ERROR_STATE_DIM, ERROR_STATE_DIM, self.covariance.as_slice()))
    }

    fn position(&self) -> Vector3<f64> {
        self.nav.position
    }

    fn velocity(&self) -> Vector3<f64> {
        self.nav.velocity
    }

    fn attitude(&self) -> Option<UnitQuaternion<f64>> {
        Some(self.nav.attitude)
    }

    fn correct(&mut self, dx: &DVector<f64>, covariance: DMatrix<f64>) -> Result<u32> {
        if dx.len() != ERROR_STATE_DIM || covariance.shape() != (ERROR_STATE_DIM, ERROR_STATE_DIM) {
            return Err(NavError::Dimension("INS correction must be 15-dimensional".into()));
        }
        if !covariance.iter().all(|v| v.is_finite()) || !is_psd(&covariance, 1e-9) {
            return Err(NavError::Divergence("posterior covariance is not positive semidefinite".into()));
        }
        let mut e = ErrorState::from_column_slice(dx.as_slice());
        let mut f = 0;
        self.nav = match apply_correction(&self.nav, &e) {
            Ok(nav) => nav,
            Err(NavError::LargeAttitudeCorrection(_)) => {
                e.fixed_rows_mut::<3>(ATT).fill(0.0);
                f |= flags::LARGE_CORRECTION;
                apply_correction(&self.nav, &e)?
            }
            Err(err) => return Err(err),
        };
        self.covariance = Matrix15::from_column_slice(covariance.as_slice());
        Ok(f)
    }
}
