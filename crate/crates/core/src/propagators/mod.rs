//! Time-propagation providers behind a common interface: the strapdown INS
//! error-state model and a kinematic position-velocity-acceleration model.

mod ins;
mod pva;

pub use ins::InsPropagator;
pub use pva::{PvaConfig, PvaPropagator};

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};

use crate::error::Result;
use crate::ins::ImuSample;

pub trait Propagator: Send {
    fn name(&self) -> &'static str;
    /// Width of the error state.
    fn dim(&self) -> usize;
    fn time(&self) -> f64;
    /// Advances to `t_to`, holding the measurement of `s` over the interval.
    fn propagate(&mut self, s: &ImuSample, t_to: f64) -> Result<()>;
    /// Covariance at the current time; folds in the accumulated transition.
    fn prior_covariance(&mut self) -> Result<DMatrix<f64>>;
    fn position(&self) -> Vector3<f64>;
    fn velocity(&self) -> Vector3<f64>;
    fn attitude(&self) -> Option<UnitQuaternion<f64>> {
        None
    }
    /// Applies a posterior error state and covariance; returns update flags.
    fn correct(&mut self, dx: &DVector<f64>, covariance: DMatrix<f64>) -> Result<u32>;
}
