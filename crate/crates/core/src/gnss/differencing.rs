use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::obs::{Constellation, EpochPair, SatKey, SatObs};
use crate::error::{NavError, Result};

/// Between-receiver single difference for one satellite. Still carries the
/// receiver clock terms; they cancel at the double-difference stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdObservation {
    pub sat: SatKey,
    /// Code single difference (m).
    pub code: f64,
    /// Phase single difference scaled by wavelength (m).
    pub phase: f64,
    /// Range-rate single difference (m/s).
    pub doppler: f64,
    pub wavelength: f64,
    pub elevation: f64,
    pub sat_position: Vector3<f64>,
}

/// `rover - (base - R(p_b, p_s))` for code and phase; plain difference for Doppler.
pub fn single_difference(rov: &SatObs, base: &SatObs, base_position: &Vector3<f64>) -> Result<SdObservation> {
    if rov.key() != base.key() {
        return Err(NavError::SatelliteMismatch { rover: rov.key().to_string(), base: base.key().to_string() });
    }
    if !rov.doppler_compensated || !base.doppler_compensated {
        return Err(NavError::invalid(format!("{}: Doppler not compensated for satellite motion", rov.key())));
    }
    let base_range = (base_position - rov.sat_position).norm();
    Ok(SdObservation {
        sat: rov.key(),
        code: rov.code - (base.code - base_range),
        phase: rov.wavelength * rov.phase - (base.wavelength * base.phase - base_range),
        doppler: rov.doppler - base.doppler,
        wavelength: rov.wavelength,
        elevation: rov.elevation,
        sat_position: rov.sat_position,
    })
}

/// Highest-elevation satellite; ties go to the lowest id.
pub fn select_pivot(sats: &[SatObs]) -> Result<SatKey> {
    best_elevation(sats.iter().map(|s| (s.key(), s.elevation)))
}

fn best_elevation(items: impl Iterator<Item = (SatKey, f64)>) -> Result<SatKey> {
    let mut best: Option<(SatKey, f64)> = None;
    for (key, el) in items {
        best = match best {
            None => Some((key, el)),
            Some((bk, bel)) if el > bel || (el == bel && key < bk) => Some((key, el)),
            keep => keep,
        };
    }
    best.map(|(k, _)| k).ok_or(NavError::NoPivot)
}

/// One double-differenced satellite (relative to its constellation pivot).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdMeasurement {
    pub sat: SatKey,
    pub pivot: SatKey,
    /// Code DD (m).
    pub code: f64,
    /// Range-rate DD (m/s).
    pub doppler: f64,
    /// Phase DD times wavelength (m).
    pub phase: f64,
    pub wavelength: f64,
    pub sat_position: Vector3<f64>,
    pub pivot_position: Vector3<f64>,
    pub elevation: f64,
    pub pivot_elevation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DdEpoch {
    pub t: f64,
    pub measurements: Vec<DdMeasurement>,
}

impl DdEpoch {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn pivots(&self) -> Vec<SatKey> {
        let mut p: Vec<SatKey> = self.measurements.iter().map(|m| m.pivot).collect();
        p.dedup();
        p
    }
}

/// Differences every single difference of the pivot's constellation against
/// the pivot. Fewer than two single differences yields an empty epoch.
pub fn double_difference(sd: &[SdObservation], pivot: SatKey) -> Result<DdEpoch> {
    let group: Vec<&SdObservation> = sd.iter().filter(|s| s.sat.constellation == pivot.constellation).collect();
    let o = group.iter().find(|s| s.sat == pivot).ok_or(NavError::NoPivot)?;
    if group.len() < 2 {
        return Ok(DdEpoch::default());
    }
    let measurements = group
        .iter()
        .filter(|s| s.sat != pivot)
        .map(|s| DdMeasurement {
            sat: s.sat,
            pivot,
            code: s.code - o.code,
            doppler: s.doppler - o.doppler,
            phase: s.phase - o.phase,
            wavelength: s.wavelength,
            sat_position: s.sat_position,
            pivot_position: o.sat_position,
            elevation: s.elevation,
            pivot_elevation: o.elevation,
        })
        .collect();
    Ok(DdEpoch { t: 0.0, measurements })
}

/// Matches rover and base by satellite, applies the elevation cutoff, and
/// double-differences each constellation against its own pivot.
pub fn form_dd_epoch(pair: &EpochPair, cutoff: f64) -> Result<DdEpoch> {
    let base: BTreeMap<SatKey, &SatObs> = pair.base.iter().map(|o| (o.key(), o)).collect();
    let mut groups: BTreeMap<Constellation, Vec<SdObservation>> = BTreeMap::new();
    let mut rover: Vec<&SatObs> = pair.rover.iter().collect();
    rover.sort_by_key(|o| o.key());
    for r in rover {
        if r.elevation < cutoff {
            continue;
        }
        let Some(b) = base.get(&r.key()) else { continue };
        if b.elevation < cutoff {
            continue;
        }
        r.validate()?;
        b.validate()?;
        groups.entry(r.constellation).or_default().push(single_difference(r, b, &pair.base_position)?);
    }
    let mut epoch = DdEpoch { t: pair.t, measurements: Vec::new() };
    for sds in groups.values() {
        let pivot = best_elevation(sds.iter().map(|s| (s.sat, s.elevation)))?;
        epoch.measurements.extend(double_difference(sds, pivot)?.measurements);
    }
    Ok(epoch)
}
