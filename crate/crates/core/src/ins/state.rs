use nalgebra::{SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

pub const ERROR_STATE_DIM: usize = 15;
/// Offsets of the error-state blocks: `[dp, dv, dtheta, dba, dbg]`.
pub const POS: usize = 0;
pub const VEL: usize = 3;
pub const ATT: usize = 6;
pub const BA: usize = 9;
pub const BG: usize = 12;

pub type ErrorState = SVector<f64, ERROR_STATE_DIM>;
pub type Matrix15 = SMatrix<f64, ERROR_STATE_DIM, ERROR_STATE_DIM>;

/// Full navigation state. `attitude` rotates body-frame vectors into ECEF.
#[derive(Clone, Debug, PartialEq)]
pub struct NavState {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
}

impl NavState {
    pub fn at_rest(t: f64, position: Vector3<f64>, attitude: UnitQuaternion<f64>) -> Self {
        NavState {
            t,
            position,
            velocity: Vector3::zeros(),
            attitude,
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.attitude.coords.iter().all(|v| v.is_finite())
            && self.accel_bias.iter().all(|v| v.is_finite())
            && self.gyro_bias.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(NavError::NonFinite("navigation state"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force, body frame (m/s^2).
    pub specific_force: Vector3<f64>,
    /// Angular rate, body frame (rad/s).
    pub angular_rate: Vector3<f64>,
}

impl ImuSample {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.specific_force.iter().all(|v| v.is_finite())
            && self.angular_rate.iter().all(|v| v.is_finite())
    }
}

/// Continuous-time IMU noise densities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuNoiseSpec {
    /// Accelerometer white noise, m/s^2/sqrt(Hz).
    pub accel_noise: f64,
    /// Gyroscope white noise, rad/s/sqrt(Hz).
    pub gyro_noise: f64,
    /// Accelerometer bias random walk, m/s^2/sqrt(s).
    pub accel_bias_walk: f64,
    /// Gyroscope bias random walk, rad/s/sqrt(s).
    pub gyro_bias_walk: f64,
}

impl ImuNoiseSpec {
    /// Smartphone-class MEMS unit.
    pub fn consumer_mems() -> Self {
        ImuNoiseSpec { accel_noise: 2.0e-3, gyro_noise: 1.5e-4, accel_bias_walk: 1.0e-4, gyro_bias_walk: 2.0e-6 }
    }

    pub fn zero() -> Self {
        ImuNoiseSpec { accel_noise: 0.0, gyro_noise: 0.0, accel_bias_walk: 0.0, gyro_bias_walk: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let v = [self.accel_noise, self.gyro_noise, self.accel_bias_walk, self.gyro_bias_walk];
        if v.iter().all(|x| x.is_finite() && *x >= 0.0) {
            Ok(())
        } else {
            Err(NavError::invalid("IMU noise densities must be finite and non-negative"))
        }
    }
}

impl Default for ImuNoiseSpec {
    fn default() -> Self {
        Self::consumer_mems()
    }
}
