use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::NavError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Gps,
    Glonass,
    Galileo,
    Beidou,
}

impl Constellation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Constellation::Gps => "gps",
            Constellation::Glonass => "glonass",
            Constellation::Galileo => "galileo",
            Constellation::Beidou => "beidou",
        }
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Constellation {
    type Err = NavError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gps" | "g" => Ok(Constellation::Gps),
            "glonass" | "r" => Ok(Constellation::Glonass),
            "galileo" | "e" => Ok(Constellation::Galileo),
            "beidou" | "c" => Ok(Constellation::Beidou),
            other => Err(NavError::invalid(format!("unknown constellation '{other}'"))),
        }
    }
}

/// Satellite identity: constellation first so pivots group naturally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SatKey {
    pub constellation: Constellation,
    pub sat_id: u32,
}

impl fmt::Display for SatKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:02}", self.constellation, self.sat_id)
    }
}

/// One satellite's observables at one receiver and epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SatObs {
    pub sat_id: u32,
    pub constellation: Constellation,
    /// Pseudorange (m).
    pub code: f64,
    /// Carrier phase (cycles).
    pub phase: f64,
    /// Range rate (m/s), positive when range increases.
    pub doppler: f64,
    pub sat_position: Vector3<f64>,
    pub sat_velocity: Vector3<f64>,
    /// Whether `doppler` already has the satellite velocity projection removed.
    pub doppler_compensated: bool,
    pub elevation: f64,
    pub wavelength: f64,
}

impl SatObs {
    pub fn key(&self) -> SatKey {
        SatKey { constellation: self.constellation, sat_id: self.sat_id }
    }

    pub fn validate(&self) -> Result<(), NavError> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(self.elevation > -half_pi && self.elevation <= half_pi) {
            return Err(NavError::invalid(format!("{}: elevation out of range", self.key())));
        }
        if !(self.wavelength > 0.0) {
            return Err(NavError::invalid(format!("{}: wavelength must be positive", self.key())));
        }
        if !(self.code > 0.0) {
            return Err(NavError::invalid(format!("{}: code must be positive", self.key())));
        }
        let finite = [self.code, self.phase, self.doppler]
            .iter()
            .chain(self.sat_position.iter())
            .chain(self.sat_velocity.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(NavError::NonFinite("satellite observation"));
        }
        Ok(())
    }
}

/// Removes the satellite-motion term `-1ᵀ v_s` from a raw range rate using an
/// approximate receiver position. Satellite clock drift is expected to have
/// been folded into `drift_mps` by the caller.
pub fn compensate_doppler(obs: &SatObs, receiver: &Vector3<f64>, drift_mps: f64) -> SatObs {
    if obs.doppler_compensated {
        return obs.clone();
    }
    let d = receiver - obs.sat_position;
    let los = d / d.norm();
    SatObs { doppler: obs.doppler + los.dot(&obs.sat_velocity) + drift_mps, doppler_compensated: true, ..obs.clone() }
}

/// Time-aligned rover and base observations for one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochPair {
    pub t: f64,
    pub rover: Vec<SatObs>,
    pub base: Vec<SatObs>,
    pub base_position: Vector3<f64>,
}
