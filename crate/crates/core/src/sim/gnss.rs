use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::constellation::Satellite;
use crate::error::{NavError, Result};
use crate::frames::elevation_azimuth;
use crate::gnss::{EpochPair, NoiseModel, RowKind, SatKey, SatObs};
use crate::rng::{stream, streams};

/// Urban error processes. All probabilities are per GNSS epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutlierModel {
    /// Clean to NLOS transition probability, per satellite.
    pub nlos_enter: f64,
    /// NLOS to clean transition probability, per satellite.
    pub nlos_exit: f64,
    /// Scale the entry probability by `2 cos²(el)` at the rover, so low
    /// satellites go NLOS more often and the zenith almost never.
    pub elevation_weighted: bool,
    /// Rover code bias drawn uniformly from `[bias_min, bias_max]` (m) on
    /// entering the NLOS state.
    pub bias_min: f64,
    pub bias_max: f64,
    /// Rover carrier cycle-slip probability, per satellite.
    pub slip_probability: f64,
    /// Long-run fraction of epochs inside an urban mask.
    pub urban_fraction: f64,
    /// Mean duration of a mask window (s).
    pub urban_dwell: f64,
    pub urban_min_visible: usize,
    pub urban_max_visible: usize,
}

impl Default for OutlierModel {
    fn default() -> Self {
        OutlierModel {
            nlos_enter: 0.0,
            nlos_exit: 0.2,
            elevation_weighted: false,
            bias_min: 5.0,
            bias_max: 50.0,
            slip_probability: 0.0,
            urban_fraction: 0.0,
            urban_dwell: 20.0,
            urban_min_visible: 4,
            urban_max_visible: 6,
        }
    }
}

impl OutlierModel {
    /// 20% of satellite-epochs NLOS with 5 to 50 m code biases, occasional
    /// cycle slips, and short masked windows.
    pub fn urban() -> Self {
        OutlierModel {
            nlos_enter: 0.05,
            nlos_exit: 0.2,
            elevation_weighted: true,
            slip_probability: 0.01,
            urban_fraction: 0.1,
            ..Default::default()
        }
    }

    /// Stationary probability of the NLOS state.
    pub fn nlos_fraction(&self) -> f64 {
        let s = self.nlos_enter + self.nlos_exit;
        if s > 0.0 {
            self.nlos_enter / s
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [self.nlos_enter, self.nlos_exit, self.slip_probability, self.urban_fraction];
        if !probs.iter().all(|p| (0.0..=1.0).contains(p)) {
            return Err(NavError::invalid("outlier probabilities must lie in [0, 1]"));
        }
        if !(self.bias_min >= 0.0 && self.bias_max >= self.bias_min && self.bias_max.is_finite()) {
            return Err(NavError::invalid("NLOS bias range must satisfy 0 <= min <= max"));
        }
        if self.urban_fraction > 0.0 && !(self.urban_dwell > 0.0) {
            return Err(NavError::invalid("urban dwell must be positive"));
        }
        if self.urban_min_visible == 0 || self.urban_max_visible < self.urban_min_visible {
            return Err(NavError::invalid("urban visible-satellite range is empty"));
        }
        Ok(())
    }
}

/// What the simulator did to one epoch, for tests and diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochEvents {
    pub t: f64,
    pub masked: bool,
    pub nlos: Vec<(SatKey, f64)>,
    pub slips: Vec<SatKey>,
}

pub struct GnssSimParams<'a> {
    pub sats: &'a [Satellite],
    pub base_position: Vector3<f64>,
    pub noise: &'a NoiseModel,
    /// Multiplies every noise standard deviation; 0 gives exact observables.
    pub noise_scale: f64,
    pub outliers: &'a OutlierModel,
    pub mask_deg: f64,
    pub rate: f64,
}

#[derive(Clone, Copy)]
struct Clock {
    offset: f64,
    drift: f64,
}

impl Clock {
    fn draw<R: Rng>(rng: &mut R) -> Clock {
        Clock { offset: rng.random_range(-3.0e5..3.0e5), drift: rng.sample::<f64, _>(StandardNormal) }
    }

    fn at(&self, t: f64) -> f64 {
        self.offset + self.drift * t
    }
}

struct SatProcess {
    nlos_bias: Option<f64>,
    rover_ambiguity: i64,
    base_ambiguity: i64,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Satellite-common delay shared by both receivers of a short baseline: a
/// troposphere term plus a satellite-dependent ionosphere term (m).
fn common_delay(el: f64, sat_id: u32) -> (f64, f64) {
    let s = el.sin().max(0.05);
    (2.4 / s, (1.0 + 0.25 * (sat_id % 7) as f64) / s.sqrt())
}

/// Rover and base observables at each `(t, position, velocity)` of the rover.
pub fn gen_gnss(
    rover: &[(f64, Vector3<f64>, Vector3<f64>)],
    p: &GnssSimParams,
    seed: u64,
) -> Result<(Vec<EpochPair>, Vec<EpochEvents>)> {
    p.noise.validate()?;
    p.outliers.validate()?;
    if !(p.noise_scale >= 0.0 && p.noise_scale.is_finite()) {
        return Err(NavError::invalid("noise scale must be non-negative"));
    }
    let om = p.outliers;
    let mut noise_rng = stream(seed, streams::GNSS_NOISE);
    let mut nlos_rng = stream(seed, streams::OUTLIERS);
    let mut slip_rng = stream(seed, streams::SLIPS);
    let mut amb_rng = stream(seed, streams::AMBIGUITIES);
    let mut urban_rng = stream(seed, streams::URBAN);
    let mut clock_rng = stream(seed, streams::CLOCKS);
    let (rover_clock, base_clock) = (Clock::draw(&mut clock_rng), Clock::draw(&mut clock_rng));

    let mut procs: Vec<SatProcess> = p
        .sats
        .iter()
        .map(|_| SatProcess {
            nlos_bias: None,
            rover_ambiguity: amb_rng.random_range(-100_000..100_000),
            base_ambiguity: amb_rng.random_range(-100_000..100_000),
        })
        .collect();
    let dt = 1.0 / p.rate;
    let mask_exit = if om.urban_fraction > 0.0 { (dt / om.urban_dwell).min(1.0) } else { 1.0 };
    let mask_enter = if om.urban_fraction >= 1.0 {
        1.0
    } else {
        (om.urban_fraction * mask_exit / (1.0 - om.urban_fraction)).min(1.0)
    };
    let mut mask: Option<usize> = None;
    let cutoff = p.mask_deg.to_radians();
    let scale = p.noise_scale / std::f64::consts::SQRT_2;

    let mut epochs = Vec::with_capacity(rover.len());
    let mut events = Vec::with_capacity(rover.len());
    for (t, pr, vr) in rover {
        let t = *t;
        let mut ev = EpochEvents { t, ..Default::default() };
        let u: f64 = urban_rng.random();
        let count = urban_rng.random_range(om.urban_min_visible..=om.urban_max_visible);
        mask = match mask {
            Some(c) if u >= mask_exit => Some(c),
            Some(_) => None,
            None if u < mask_enter => Some(count),
            None => None,
        };
        ev.masked = mask.is_some();

        let mut rov = Vec::new();
        let mut base = Vec::new();
        for (sat, proc) in p.sats.iter().zip(procs.iter_mut()) {
            let key = sat.key;
            let (ps, vs) = sat.state(t);
            let n: [f64; 6] = std::array::from_fn(|_| normal(&mut noise_rng));

            let (el_b, _) = elevation_azimuth(&p.base_position, &ps);
            let (el_r, _) = elevation_azimuth(pr, &ps);
            let enter = if om.elevation_weighted { om.nlos_enter * 2.0 * el_r.cos().powi(2) } else { om.nlos_enter };
            let u: f64 = nlos_rng.random();
            let b: f64 = nlos_rng.random_range(0.0..=1.0);
            proc.nlos_bias = match proc.nlos_bias {
                Some(x) if u >= om.nlos_exit => Some(x),
                Some(_) => None,
                None if u < enter => Some(om.bias_min + b * (om.bias_max - om.bias_min)),
                None => None,
            };
            let slip_u: f64 = slip_rng.random();
            let mut jump: i64 = slip_rng.random_range(1..=20);
            if slip_rng.random::<bool>() {
                jump = -jump;
            }
            if slip_u < om.slip_probability {
                proc.rover_ambiguity += jump;
                ev.slips.push(key);
            }

            let (trop, iono) = common_delay(el_b, key.sat_id);
            let lambda = sat.wavelength;
            let make =
                |pos: &Vector3<f64>, vel: &Vector3<f64>, el: f64, clk: &Clock, amb: i64, noise: &[f64], bias: f64| {
                    let d = pos - ps;
                    let range = d.norm();
                    let los = d / range;
                    let sc = scale * p.noise.sigma(RowKind::Code, el);
                    let sd = scale * p.noise.sigma(RowKind::Doppler, el);
                    let sp = scale * p.noise.sigma(RowKind::Phase, el);
                    let phase_m = range + clk.at(t) + trop - iono + sp * noise[2];
                    SatObs {
                        sat_id: key.sat_id,
                        constellation: key.constellation,
                        code: range + clk.at(t) + trop + iono + sc * noise[0] + bias,
                        phase: phase_m / lambda + amb as f64,
                        doppler: los.dot(vel) + clk.drift + sd * noise[1],
                        sat_position: ps,
                        sat_velocity: vs,
                        doppler_compensated: true,
                        elevation: el,
                        wavelength: lambda,
                    }
                };
            if el_b >= cutoff {
                base.push(make(
                    &p.base_position,
                    &Vector3::zeros(),
                    el_b,
                    &base_clock,
                    proc.base_ambiguity,
                    &n[3..],
                    0.0,
                ));
            }
            if el_r >= cutoff {
                let bias = proc.nlos_bias.unwrap_or(0.0);
                if bias != 0.0 {
                    ev.nlos.push((key, bias));
                }
                rov.push(make(pr, vr, el_r, &rover_clock, proc.rover_ambiguity, &n[..3], bias));
            }
        }
        if let Some(c) = mask {
            rov.sort_by(|a, b| b.elevation.total_cmp(&a.elevation).then(a.key().cmp(&b.key())));
            rov.truncate(c);
            rov.sort_by_key(|o| o.key());
            ev.nlos.retain(|(k, _)| rov.iter().any(|o| o.key() == *k));
        }
        epochs.push(EpochPair { t, rover: rov, base, base_position: p.base_position });
        events.push(ev);
    }
    Ok((epochs, events))
}
