//! Synthetic urban driving scenarios: truth trajectory, IMU stream, satellite
//! geometry and rover/base GNSS observables with NLOS and slip processes.

mod constellation;
mod gnss;
mod imu;
mod trajectory;

pub use constellation::{
    build_constellation, ConstellationConfig, Satellite, Shell, BEIDOU_B1_WAVELENGTH, GLONASS_L1_WAVELENGTH,
    L1_WAVELENGTH,
};
pub use gnss::{gen_gnss, EpochEvents, GnssSimParams, OutlierModel};
pub use imu::{gen_imu, invert_mechanization, ImuErrorConfig};
pub use trajectory::{gen_trajectory, LocalKinematics, Origin, Trajectory, TrajectoryProfile, TruthRecord};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::filter::Dataset;
use crate::frames::EarthModel;
use crate::gnss::NoiseModel;
use crate::rng::{stream, streams};

const MAX_BASELINE: f64 = 20_000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Total length including the stationary prefix (s).
    pub duration: f64,
    pub imu_rate: f64,
    pub gnss_rate: f64,
    pub stationary_prefix: f64,
    pub origin: Origin,
    pub trajectory: TrajectoryProfile,
    /// Base station offset from the origin (m, ENU).
    pub base_offset_enu: [f64; 3],
    pub constellation: ConstellationConfig,
    /// Elevation below which a receiver does not track (deg).
    pub mask_deg: f64,
    pub noise: NoiseModel,
    pub noise_scale: f64,
    pub outliers: OutlierModel,
    pub imu: ImuErrorConfig,
    pub earth: EarthModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            duration: 300.0,
            imu_rate: 150.0,
            gnss_rate: 1.0,
            stationary_prefix: 60.0,
            origin: Origin::default(),
            trajectory: TrajectoryProfile::Circle { radius: 150.0, speed: 10.0, ramp: 10.0 },
            base_offset_enu: [250.0, -180.0, 2.0],
            constellation: ConstellationConfig::default(),
            mask_deg: 5.0,
            noise: NoiseModel::default(),
            noise_scale: 1.0,
            outliers: OutlierModel::default(),
            imu: ImuErrorConfig::default(),
            earth: EarthModel::Wgs84,
        }
    }
}

pub const PRESETS: [&str; 4] = ["open-sky", "urban", "urban-small", "zero-noise"];

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let base = ScenarioConfig::default();
    Ok(match name.trim().to_ascii_lowercase().as_str() {
        "open-sky" => base,
        "urban" => ScenarioConfig { outliers: OutlierModel::urban(), ..base },
        "urban-small" => {
            ScenarioConfig { duration: 120.0, stationary_prefix: 30.0, outliers: OutlierModel::urban(), ..base }
        }
        "zero-noise" => ScenarioConfig { noise_scale: 0.0, imu: ImuErrorConfig::zero(), ..base },
        other => return Err(NavError::invalid(format!("unknown preset '{other}' (known: {})", PRESETS.join(", ")))),
    })
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(NavError::invalid("duration must be positive"));
        }
        if !(self.imu_rate > 0.0 && self.gnss_rate > 0.0) || !self.imu_rate.is_finite() {
            return Err(NavError::invalid("sampling rates must be positive"));
        }
        if self.gnss_rate > self.imu_rate {
            return Err(NavError::invalid("GNSS rate must not exceed the IMU rate"));
        }
        if !(-90.0..90.0).contains(&self.mask_deg) {
            return Err(NavError::invalid("elevation mask out of range"));
        }
        self.noise.validate()?;
        self.outliers.validate()?;
        self.imu.validate()?;
        self.constellation.validate()
    }

    pub fn base_position(&self) -> Vector3<f64> {
        self.origin.ecef() + self.origin.enu_rotation() * Vector3::from(self.base_offset_enu)
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    /// Truth at the IMU rate.
    pub truth: Vec<TruthRecord>,
    pub dataset: Dataset,
    pub events: Vec<EpochEvents>,
}

/// Generates a scenario. The output is a pure function of `(cfg, seed)`.
pub fn simulate(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let traj = Trajectory::new(&cfg.trajectory, &cfg.origin, cfg.stationary_prefix)?;
    let mut truth = gen_trajectory(&traj, cfg.duration, cfg.imu_rate)?;
    let imu = gen_imu(&mut truth, &cfg.imu, cfg.earth, seed)?;

    let n = (cfg.duration * cfg.gnss_rate).floor() as usize;
    let rover: Vec<_> = (0..=n)
        .map(|j| {
            let t = j as f64 / cfg.gnss_rate;
            let (p, v) = traj.ecef(t);
            (t, p, v)
        })
        .collect();
    let base = cfg.base_position();
    if let Some((t, _, _)) = rover.iter().find(|(_, p, _)| (p - base).norm() > MAX_BASELINE) {
        return Err(NavError::invalid(format!("rover is more than 20 km from the base at t = {t}")));
    }
    let sats = build_constellation(&cfg.constellation, &cfg.origin.ecef(), &mut stream(seed, streams::GEOMETRY))?;
    let params = GnssSimParams {
        sats: &sats,
        base_position: base,
        noise: &cfg.noise,
        noise_scale: cfg.noise_scale,
        outliers: &cfg.outliers,
        mask_deg: cfg.mask_deg,
        rate: cfg.gnss_rate,
    };
    let (epochs, events) = gen_gnss(&rover, &params, seed)?;
    Ok(Scenario { truth, dataset: Dataset { imu, epochs }, events })
}
