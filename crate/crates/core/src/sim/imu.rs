use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::trajectory::TruthRecord;
use crate::error::{NavError, Result};
use crate::frames::EarthModel;
use crate::ins::{ImuNoiseSpec, ImuSample};
use crate::rng::{stream, streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuErrorConfig {
    pub noise: ImuNoiseSpec,
    /// Standard deviation of the turn-on accelerometer bias (m/s²).
    pub accel_bias_sigma: f64,
    /// Standard deviation of the turn-on gyroscope bias (rad/s).
    pub gyro_bias_sigma: f64,
}

impl Default for ImuErrorConfig {
    fn default() -> Self {
        ImuErrorConfig { noise: ImuNoiseSpec::consumer_mems(), accel_bias_sigma: 0.02, gyro_bias_sigma: 2.0e-4 }
    }
}

impl ImuErrorConfig {
    pub fn zero() -> Self {
        ImuErrorConfig { noise: ImuNoiseSpec::zero(), accel_bias_sigma: 0.0, gyro_bias_sigma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if !(self.accel_bias_sigma >= 0.0 && self.gyro_bias_sigma >= 0.0) {
            return Err(NavError::invalid("bias sigmas must be non-negative"));
        }
        Ok(())
    }
}

/// Error-free specific force and angular rate that carry `a` to `b` under
/// the discrete mechanization with a single held sample.
pub fn invert_mechanization(a: &TruthRecord, b: &TruthRecord, earth: EarthModel) -> (Vector3<f64>, Vector3<f64>) {
    let dt = b.t - a.t;
    let omega = earth.rotation_rate();
    let earth_turn = UnitQuaternion::from_scaled_axis(omega * dt);
    let earth_half = UnitQuaternion::from_scaled_axis(omega * (0.5 * dt));
    let theta = (a.attitude.inverse() * earth_turn * b.attitude).scaled_axis();
    let mid = earth_half.inverse() * a.attitude * UnitQuaternion::from_scaled_axis(theta * 0.5);
    let accel = (b.velocity - a.velocity) / dt;
    let f = mid.inverse() * (accel - earth.gravity(&a.position) + 2.0 * omega.cross(&a.velocity));
    (f, theta / dt)
}

fn gaussian3<R: Rng>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

/// One sample per truth interval, stamped at the interval end. Biases follow
/// a random walk and are written back into `truth`.
pub fn gen_imu(
    truth: &mut [TruthRecord],
    cfg: &ImuErrorConfig,
    earth: EarthModel,
    seed: u64,
) -> Result<Vec<ImuSample>> {
    cfg.validate()?;
    let mut rng = stream(seed, streams::IMU);
    let mut ba = gaussian3(&mut rng, cfg.accel_bias_sigma);
    let mut bg = gaussian3(&mut rng, cfg.gyro_bias_sigma);
    if let Some(first) = truth.first_mut() {
        first.accel_bias = ba;
        first.gyro_bias = bg;
    }
    let mut out = Vec::with_capacity(truth.len().saturating_sub(1));
    for k in 1..truth.len() {
        let dt = truth[k].t - truth[k - 1].t;
        if !(dt > 0.0) {
            return Err(NavError::invalid("truth timestamps must increase"));
        }
        ba += gaussian3(&mut rng, cfg.noise.accel_bias_walk * dt.sqrt());
        bg += gaussian3(&mut rng, cfg.noise.gyro_bias_walk * dt.sqrt());
        let (f, w) = invert_mechanization(&truth[k - 1], &truth[k], earth);
        let nf = gaussian3(&mut rng, cfg.noise.accel_noise / dt.sqrt());
        let nw = gaussian3(&mut rng, cfg.noise.gyro_noise / dt.sqrt());
        truth[k].accel_bias = ba;
        truth[k].gyro_bias = bg;
        out.push(ImuSample { t: truth[k].t, specific_force: f + ba + nf, angular_rate: w + bg + nw });
    }
    Ok(out)
}
