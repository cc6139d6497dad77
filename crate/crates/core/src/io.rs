//! CSV and JSONL formats for datasets, truth, trajectories and diagnostics.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::filter::EpochRecord;
use crate::gnss::{EpochPair, SatObs};
use crate::ins::ImuSample;
use crate::sim::TruthRecord;

/// Rover and base epochs closer than this are merged (s).
pub const EPOCH_TOLERANCE: f64 = 1e-6;

#[derive(Serialize, Deserialize)]
struct ImuRow {
    t: f64,
    fx: f64,
    fy: f64,
    fz: f64,
    wx: f64,
    wy: f64,
    wz: f64,
}

#[derive(Serialize, Deserialize)]
struct GnssRow {
    t: f64,
    sat_id: u32,
    constellation: String,
    code_m: f64,
    phase_cycles: f64,
    doppler_ms: f64,
    sat_x: f64,
    sat_y: f64,
    sat_z: f64,
    sat_vx: f64,
    sat_vy: f64,
    sat_vz: f64,
    elev_rad: f64,
    wavelength_m: f64,
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    t: f64,
    px: f64,
    py: f64,
    pz: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

/// One row of the trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub method: String,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub flags: u32,
    pub m_used: usize,
    pub m_total: usize,
    pub risk: f64,
    pub feasible: bool,
}

impl TrajectoryRow {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.px, self.py, self.pz)
    }
}

impl From<&EpochRecord> for TrajectoryRow {
    fn from(r: &EpochRecord) -> Self {
        TrajectoryRow {
            t: r.t,
            method: r.method.clone(),
            px: r.position.x,
            py: r.position.y,
            pz: r.position.z,
            vx: r.velocity.x,
            vy: r.velocity.y,
            vz: r.velocity.z,
            flags: r.flags,
            m_used: r.m_used,
            m_total: r.m_total,
            risk: r.risk,
            feasible: r.feasible,
        }
    }
}

/// One line of the diagnostics JSONL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub m: usize,
    pub feasible: bool,
    pub iters: usize,
    pub risk: f64,
    pub tau: Vec<f64>,
    pub mu: Vec<f64>,
    pub info_diag: Vec<f64>,
}

impl From<&EpochRecord> for DiagnosticsRow {
    fn from(r: &EpochRecord) -> Self {
        DiagnosticsRow {
            t: r.t,
            m: r.m_total,
            feasible: r.feasible,
            iters: r.iterations,
            risk: r.risk,
            tau: r.tau.clone(),
            mu: r.mu.clone(),
            info_diag: r.info_diag.clone(),
        }
    }
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R, what: &str) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| NavError::invalid(format!("{what} row {}: {e}", i + 1))))
        .collect()
}

pub fn write_imu_csv<W: Write>(w: W, samples: &[ImuSample]) -> Result<()> {
    write_rows(
        w,
        samples.iter().map(|s| ImuRow {
            t: s.t,
            fx: s.specific_force.x,
            fy: s.specific_force.y,
            fz: s.specific_force.z,
            wx: s.angular_rate.x,
            wy: s.angular_rate.y,
            wz: s.angular_rate.z,
        }),
    )
}

pub fn read_imu_csv<R: Read>(r: R) -> Result<Vec<ImuSample>> {
    let rows: Vec<ImuRow> = read_rows(r, "IMU")?;
    Ok(rows
        .into_iter()
        .map(|r| ImuSample {
            t: r.t,
            specific_force: Vector3::new(r.fx, r.fy, r.fz),
            angular_rate: Vector3::new(r.wx, r.wy, r.wz),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Receiver {
    Rover,
    Base,
}

/// Writes one receiver's observations, one row per satellite per epoch.
pub fn write_gnss_csv<W: Write>(w: W, epochs: &[EpochPair], receiver: Receiver) -> Result<()> {
    let mut rows = Vec::new();
    for e in epochs {
        let obs = match receiver {
            Receiver::Rover => &e.rover,
            Receiver::Base => &e.base,
        };
        for o in obs {
            if !o.doppler_compensated {
                return Err(NavError::invalid(format!("{}: the CSV format requires compensated Doppler", o.key())));
            }
            rows.push(GnssRow {
                t: e.t,
                sat_id: o.sat_id,
                constellation: o.constellation.as_str().to_string(),
                code_m: o.code,
                phase_cycles: o.phase,
                doppler_ms: o.doppler,
                sat_x: o.sat_position.x,
                sat_y: o.sat_position.y,
                sat_z: o.sat_position.z,
                sat_vx: o.sat_velocity.x,
                sat_vy: o.sat_velocity.y,
                sat_vz: o.sat_velocity.z,
                elev_rad: o.elevation,
                wavelength_m: o.wavelength,
            });
        }
    }
    write_rows(w, rows)
}

/// Reads one receiver's observations as `(t, obs)` rows in file order.
pub fn read_gnss_csv<R: Read>(r: R) -> Result<Vec<(f64, SatObs)>> {
    let rows: Vec<GnssRow> = read_rows(r, "GNSS")?;
    rows.into_iter()
        .map(|r| {
            Ok((
                r.t,
                SatObs {
                    sat_id: r.sat_id,
                    constellation: r.constellation.parse()?,
                    code: r.code_m,
                    phase: r.phase_cycles,
                    doppler: r.doppler_ms,
                    sat_position: Vector3::new(r.sat_x, r.sat_y, r.sat_z),
                    sat_velocity: Vector3::new(r.sat_vx, r.sat_vy, r.sat_vz),
                    doppler_compensated: true,
                    elevation: r.elev_rad,
                    wavelength: r.wavelength_m,
                },
            ))
        })
        .collect()
}

/// Groups rover and base rows into epochs. An epoch seen by only one
/// receiver gets an empty list for the other.
pub fn assemble_epochs(
    rover: Vec<(f64, SatObs)>,
    base: Vec<(f64, SatObs)>,
    base_position: Vector3<f64>,
) -> Result<Vec<EpochPair>> {
    if !base_position.iter().all(|v| v.is_finite()) {
        return Err(NavError::NonFinite("base position"));
    }
    let mut times: Vec<f64> = rover.iter().chain(&base).map(|(t, _)| *t).collect();
    if times.iter().any(|t| !t.is_finite()) {
        return Err(NavError::NonFinite("GNSS epoch time"));
    }
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < EPOCH_TOLERANCE);
    let index = |t: f64| times.partition_point(|x| *x < t - EPOCH_TOLERANCE);
    let mut groups: BTreeMap<usize, (Vec<SatObs>, Vec<SatObs>)> = BTreeMap::new();
    for (t, o) in rover {
        groups.entry(index(t)).or_default().0.push(o);
    }
    for (t, o) in base {
        groups.entry(index(t)).or_default().1.push(o);
    }
    Ok(groups.into_iter().map(|(k, (rover, base))| EpochPair { t: times[k], rover, base, base_position }).collect())
}

/// Position, velocity and attitude only; biases are not part of the format.
pub fn write_truth_csv<W: Write>(w: W, truth: &[TruthRecord]) -> Result<()> {
    write_rows(
        w,
        truth.iter().map(|r| {
            let q = r.attitude.quaternion();
            TruthRow {
                t: r.t,
                px: r.position.x,
                py: r.position.y,
                pz: r.position.z,
                vx: r.velocity.x,
                vy: r.velocity.y,
                vz: r.velocity.z,
                qw: q.w,
                qx: q.i,
                qy: q.j,
                qz: q.k,
            }
        }),
    )
}

pub fn read_truth_csv<R: Read>(r: R) -> Result<Vec<TruthRecord>> {
    let rows: Vec<TruthRow> = read_rows(r, "truth")?;
    rows.into_iter()
        .map(|r| {
            let q = Quaternion::new(r.qw, r.qx, r.qy, r.qz);
            if !(q.norm() > 0.0) {
                return Err(NavError::invalid(format!("truth at t={}: zero quaternion", r.t)));
            }
            Ok(TruthRecord {
                t: r.t,
                position: Vector3::new(r.px, r.py, r.pz),
                velocity: Vector3::new(r.vx, r.vy, r.vz),
                attitude: UnitQuaternion::from_quaternion(q),
                accel_bias: Vector3::zeros(),
                gyro_bias: Vector3::zeros(),
            })
        })
        .collect()
}

pub fn write_trajectory_csv<W: Write>(w: W, records: &[EpochRecord]) -> Result<()> {
    write_rows(w, records.iter().map(TrajectoryRow::from))
}

pub fn read_trajectory_csv<R: Read>(r: R) -> Result<Vec<TrajectoryRow>> {
    read_rows(r, "trajectory")
}

pub fn write_diagnostics_jsonl<W: Write>(mut w: W, records: &[EpochRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, &DiagnosticsRow::from(r))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_diagnostics_jsonl<R: Read>(r: R) -> Result<Vec<DiagnosticsRow>> {
    let mut text = String::new();
    let mut r = r;
    r.read_to_string(&mut text)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| NavError::invalid(format!("diagnostics line {}: {e}", i + 1)))
        })
        .collect()
}
