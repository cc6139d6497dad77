//! The navigation run loop: merges the IMU stream with GNSS epochs,
//! initializes from GNSS fixes, and applies one measurement update per epoch.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::estimators::{linearize, LinearizedEpoch, UpdateOutcome};
use crate::frames::EarthModel;
use crate::gnss::{code_position_fix, doppler_velocity_fix, form_dd_epoch, DdEpoch, EpochPair, NoiseModel};
use crate::ins::{
    level_and_align, ImuNoiseSpec, ImuSample, LevelingAccumulator, Matrix15, NavState, ATT, BA, BG, POS, VEL,
};
use crate::linalg::skew;
use crate::propagators::{InsPropagator, Propagator, PvaConfig, PvaPropagator};
use crate::registry::{Method, PropagatorKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// GNSS speed below which an epoch counts as stationary (m/s). IMU
    /// samples between two stationary epochs are used for leveling.
    pub stationary_speed: f64,
    /// GNSS speed at which the filter starts and takes its heading (m/s).
    pub start_speed: f64,
    /// Start anyway, with `fallback_heading_deg`, after this long (s).
    pub max_wait: f64,
    /// Counter-clockwise from East.
    pub fallback_heading_deg: f64,
    pub sigma_tilt_deg: f64,
    pub sigma_yaw_deg: f64,
    pub sigma_accel_bias: f64,
    pub sigma_gyro_bias: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            stationary_speed: 0.05,
            start_speed: 1.0,
            max_wait: 600.0,
            fallback_heading_deg: 0.0,
            sigma_tilt_deg: 1.0,
            sigma_yaw_deg: 5.0,
            sigma_accel_bias: 0.05,
            sigma_gyro_bias: 5.0e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub earth: EarthModel,
    pub imu_noise: ImuNoiseSpec,
    pub noise: NoiseModel,
    pub elev_cutoff_deg: f64,
    pub init: InitConfig,
    pub pva: PvaConfig,
    /// IMU-to-antenna offset in the body frame (m).
    pub lever_arm: [f64; 3],
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            earth: EarthModel::Wgs84,
            imu_noise: ImuNoiseSpec::consumer_mems(),
            noise: NoiseModel::default(),
            elev_cutoff_deg: 10.0,
            init: InitConfig::default(),
            pva: PvaConfig::default(),
            lever_arm: [0.0; 3],
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        self.imu_noise.validate()?;
        self.noise.validate()?;
        if !(0.0..90.0).contains(&self.elev_cutoff_deg) {
            return Err(NavError::invalid("elevation cutoff must be in [0, 90) degrees"));
        }
        let i = &self.init;
        let positive = [i.start_speed, i.sigma_tilt_deg, i.sigma_yaw_deg, i.sigma_accel_bias, i.sigma_gyro_bias];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) || !(i.stationary_speed >= 0.0) || !(i.max_wait >= 0.0) {
            return Err(NavError::invalid("initialization speeds and sigmas must be positive"));
        }
        if !self.lever_arm.iter().all(|v| v.is_finite()) {
            return Err(NavError::NonFinite("lever arm"));
        }
        Ok(())
    }

    fn lever_arm(&self) -> Option<Vector3<f64>> {
        let l = Vector3::from(self.lever_arm);
        (l.norm() > 0.0).then_some(l)
    }
}

/// Sensor data for one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub imu: Vec<ImuSample>,
    pub epochs: Vec<EpochPair>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.epochs.is_empty() {
            return Err(NavError::invalid("dataset has no GNSS epochs"));
        }
        if let Some(w) = self.imu.windows(2).find(|w| !(w[1].t > w[0].t)) {
            return Err(NavError::invalid(format!("IMU timestamps not increasing at t = {}", w[1].t)));
        }
        if let Some(w) = self.epochs.windows(2).find(|w| !(w[1].t > w[0].t)) {
            return Err(NavError::invalid(format!("GNSS epochs not increasing at t = {}", w[1].t)));
        }
        if let Some(s) = self.imu.iter().find(|s| !s.is_finite()) {
            return Err(NavError::invalid(format!("non-finite IMU sample at t = {}", s.t)));
        }
        Ok(())
    }
}

/// Per-epoch output of a filter run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub t: f64,
    pub method: String,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub position_covariance: Matrix3<f64>,
    pub flags: u32,
    pub m_used: usize,
    pub m_total: usize,
    pub risk: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub tau: Vec<f64>,
    pub mu: Vec<f64>,
    pub info_diag: Vec<f64>,
}

impl EpochRecord {
    fn new(method: &str, t: f64, prop: &dyn Propagator, out: &UpdateOutcome, flags: u32) -> Self {
        EpochRecord {
            t,
            method: method.to_string(),
            position: prop.position(),
            velocity: prop.velocity(),
            position_covariance: out.covariance.fixed_view::<3, 3>(POS, POS).into_owned(),
            flags: out.flags | flags,
            m_used: out.m_used,
            m_total: out.m_total,
            risk: out.risk,
            feasible: out.feasible,
            iterations: out.iterations,
            tau: out.weights.iter().copied().collect(),
            mu: out.slack.iter().copied().collect(),
            info_diag: out.info_diag.iter().copied().collect(),
        }
    }
}

/// Position and velocity fixes plus leveling data gathered before the start.
struct Initializer {
    leveling: LevelingAccumulator,
    pending: LevelingAccumulator,
    was_stationary: bool,
    first_fix: Option<f64>,
    last_fix: Option<(f64, Fix)>,
}

/// 99.9% point of chi-square(3): two consecutive fixes must agree this well
/// before the filter starts.
const START_GATE: f64 = 16.266;

#[derive(Clone)]
struct Fix {
    position: Vector3<f64>,
    position_cov: Matrix3<f64>,
    velocity: Vector3<f64>,
    velocity_cov: Matrix3<f64>,
}

impl Initializer {
    fn fix(dd: &DdEpoch, base: &Vector3<f64>, nm: &NoiseModel) -> Option<Fix> {
        let (position, position_cov) = code_position_fix(dd, base, nm).ok()?;
        let (velocity, velocity_cov) = doppler_velocity_fix(dd, &position, nm).ok()?;
        Some(Fix { position, position_cov, velocity, velocity_cov })
    }

    /// Returns a propagator once the start condition is met.
    fn try_start(
        &mut self,
        kind: PropagatorKind,
        t: f64,
        dd: &DdEpoch,
        pair: &EpochPair,
        cfg: &FilterConfig,
    ) -> Result<Option<Box<dyn Propagator>>> {
        let Some(fix) = Self::fix(dd, &pair.base_position, &cfg.noise) else {
            self.pending.clear();
            self.was_stationary = false;
            self.last_fix = None;
            return Ok(None);
        };
        // the new fix against the previous one carried forward at the mean velocity
        let consistent = self.last_fix.as_ref().is_some_and(|(t0, f0)| {
            let dt = t - t0;
            let d = fix.position - (f0.position + (f0.velocity + fix.velocity) * (0.5 * dt));
            let c = f0.position_cov + fix.position_cov + (f0.velocity_cov + fix.velocity_cov) * (0.25 * dt * dt);
            c.try_inverse().is_some_and(|ci| d.dot(&(ci * d)) <= START_GATE)
        });
        self.last_fix = Some((t, fix.clone()));
        let speed = fix.velocity.norm();
        let stationary = speed < cfg.init.stationary_speed;
        if stationary && self.was_stationary {
            self.leveling.merge(&self.pending);
        }
        self.was_stationary = stationary;
        self.pending.clear();
        let first = *self.first_fix.get_or_insert(t);
        // speed must clear the threshold by three sigma along the velocity
        let along = if speed > 0.0 { fix.velocity / speed } else { Vector3::x() };
        let sigma_speed = along.dot(&(fix.velocity_cov * along)).sqrt();
        let moving = speed - 3.0 * sigma_speed >= cfg.init.start_speed;
        if !(moving && consistent) && t - first < cfg.init.max_wait {
            return Ok(None);
        }
        let ini = &cfg.init;
        let prop: Box<dyn Propagator> = match kind {
            PropagatorKind::Ins => {
                let (mean_force, leveled) = match self.leveling.mean() {
                    Some(f) => (f, true),
                    None => (Vector3::z() * 9.8, false),
                };
                let attitude = level_and_align(
                    &mean_force,
                    &fix.position,
                    moving.then_some(&fix.velocity),
                    ini.fallback_heading_deg.to_radians(),
                    cfg.earth,
                )?;
                let tilt = if leveled { ini.sigma_tilt_deg } else { 5.0 * ini.sigma_tilt_deg }.to_radians();
                let mut p0 = Matrix15::zeros();
                p0.fixed_view_mut::<3, 3>(POS, POS).copy_from(&fix.position_cov);
                p0.fixed_view_mut::<3, 3>(VEL, VEL).copy_from(&fix.velocity_cov);
                let yaw = if moving {
                    ini.sigma_yaw_deg.to_radians().max((fix.velocity_cov.trace().sqrt() / speed).atan())
                } else {
                    ini.sigma_yaw_deg.max(30.0).to_radians()
                };
                for (k, s) in [tilt, tilt, yaw].iter().enumerate() {
                    p0[(ATT + k, ATT + k)] = s * s;
                    p0[(BA + k, BA + k)] = ini.sigma_accel_bias.powi(2);
                    p0[(BG + k, BG + k)] = ini.sigma_gyro_bias.powi(2);
                }
                let mut nav = NavState::at_rest(t, fix.position, attitude);
                nav.velocity = fix.velocity;
                if let Some(l) = cfg.lever_arm() {
                    nav.position -= attitude * l;
                }
                Box::new(InsPropagator::new(nav, p0, cfg.imu_noise, cfg.earth)?)
            }
            PropagatorKind::Pva => {
                let mut p0 = DMatrix::zeros(9, 9);
                p0.view_mut((0, 0), (3, 3)).copy_from(&fix.position_cov);
                p0.view_mut((3, 3), (3, 3)).copy_from(&fix.velocity_cov);
                for k in 6..9 {
                    p0[(k, k)] = cfg.pva.accel_sigma.powi(2);
                }
                Box::new(PvaPropagator::new(t, fix.position, fix.velocity, p0, &cfg.pva)?)
            }
        };
        Ok(Some(prop))
    }
}

/// Evaluates the measurement model at the antenna, adding attitude columns
/// for the lever arm. Its rotational velocity is neglected.
fn linearize_at_antenna(dd: &DdEpoch, prop: &dyn Propagator, cfg: &FilterConfig) -> Result<LinearizedEpoch> {
    let mut position = prop.position();
    let lever = match (cfg.lever_arm(), prop.attitude()) {
        (Some(l), Some(q)) => Some((l, q)),
        (Some(_), None) => return Err(NavError::invalid("a lever arm needs an attitude-carrying propagator")),
        _ => None,
    };
    if let Some((l, q)) = lever {
        position += q * l;
    }
    let mut lin = linearize(dd, &position, &prop.velocity(), prop.dim(), &cfg.noise)?;
    if let Some((l, q)) = lever {
        let d: Matrix3<f64> = -(q.to_rotation_matrix().matrix() * skew(&l));
        for r in 0..lin.rows() {
            let hp = lin.h.fixed_view::<1, 3>(r, POS).into_owned();
            if hp.iter().any(|v| *v != 0.0) {
                let add = hp * d;
                let mut dst = lin.h.fixed_view_mut::<1, 3>(r, ATT);
                dst += add;
            }
        }
    }
    Ok(lin)
}

/// Runs `method` over `data` and returns one record per GNSS epoch after start.
pub fn run_filter(method: &Method, data: &Dataset, cfg: &FilterConfig) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    data.validate()?;
    if cfg.lever_arm().is_some() && method.propagator == PropagatorKind::Pva {
        return Err(NavError::invalid(format!("{}: lever arm is not supported without an INS", method.name)));
    }
    let cutoff = cfg.elev_cutoff_deg.to_radians();
    let mut init = Initializer {
        leveling: Default::default(),
        pending: Default::default(),
        was_stationary: false,
        first_fix: None,
        last_fix: None,
    };
    let mut prop: Option<Box<dyn Propagator>> = None;
    let mut records = Vec::with_capacity(data.epochs.len());
    let mut next = 0usize;

    for pair in &data.epochs {
        let t = pair.t;
        while next < data.imu.len() && data.imu[next].t <= t {
            let s = &data.imu[next];
            match prop.as_mut() {
                Some(p) => p.propagate(s, s.t)?,
                None => init.pending.add(s),
            }
            next += 1;
        }
        if let (Some(p), Some(s)) = (prop.as_mut(), data.imu.get(next)) {
            p.propagate(s, t)?;
        }
        let dd = form_dd_epoch(pair, cutoff)?;

        let Some(p) = prop.as_mut() else {
            prop = init.try_start(method.propagator, t, &dd, pair, cfg)?;
            continue;
        };
        let prior = p.prior_covariance()?;
        let lin = linearize_at_antenna(&dd, p.as_ref(), cfg)?;
        let out = method.update.update(&prior, &lin)?;
        let f = p.correct(&out.dx, out.covariance.clone())?;
        if !p.position().iter().chain(p.velocity().iter()).all(|v| v.is_finite()) {
            return Err(NavError::Divergence(format!("non-finite state at t = {t}")));
        }
        records.push(EpochRecord::new(&method.name, t, p.as_ref(), &out, f));
    }
    Ok(records)
}
