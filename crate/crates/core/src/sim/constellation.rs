use std::f64::consts::TAU;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::frames::{enu_to_ecef_at, EARTH_RATE, WGS84_GM};
use crate::gnss::{Constellation, SatKey};

pub const L1_WAVELENGTH: f64 = 0.190_293_672_798_365;
/// GLONASS L1 at the FDMA centre frequency (1602 MHz).
pub const GLONASS_L1_WAVELENGTH: f64 = 0.187_136_365_792_759;
/// BeiDou B1I (1561.098 MHz).
pub const BEIDOU_B1_WAVELENGTH: f64 = 0.192_039_486_310_276;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub constellation: Constellation,
    pub planes: u32,
    pub per_plane: u32,
    /// Orbit radius (m).
    pub radius: f64,
    pub inclination_deg: f64,
    /// Walker phasing factor.
    #[serde(default)]
    pub phasing: u32,
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
}

fn default_wavelength() -> f64 {
    L1_WAVELENGTH
}

impl Shell {
    pub fn gps() -> Self {
        Shell {
            constellation: Constellation::Gps,
            planes: 6,
            per_plane: 4,
            radius: 26_559_700.0,
            inclination_deg: 55.0,
            phasing: 1,
            wavelength: L1_WAVELENGTH,
        }
    }

    pub fn galileo() -> Self {
        Shell {
            constellation: Constellation::Galileo,
            planes: 3,
            per_plane: 8,
            radius: 29_600_000.0,
            inclination_deg: 56.0,
            phasing: 1,
            wavelength: L1_WAVELENGTH,
        }
    }

    /// Single nominal wavelength; the per-satellite FDMA channels are not modelled.
    pub fn glonass() -> Self {
        Shell {
            constellation: Constellation::Glonass,
            planes: 3,
            per_plane: 8,
            radius: 25_508_200.0,
            inclination_deg: 64.8,
            phasing: 1,
            wavelength: GLONASS_L1_WAVELENGTH,
        }
    }

    /// MEO satellites only.
    pub fn beidou() -> Self {
        Shell {
            constellation: Constellation::Beidou,
            planes: 3,
            per_plane: 8,
            radius: 27_906_100.0,
            inclination_deg: 55.0,
            phasing: 1,
            wavelength: BEIDOU_B1_WAVELENGTH,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ConstellationConfig {
    /// Satellites fixed in ECEF at `[azimuth, elevation]` (deg, azimuth
    /// clockwise from North) as seen from the origin.
    Ring {
        constellation: Constellation,
        sats: Vec<[f64; 2]>,
        #[serde(default = "default_ring_range")]
        range: f64,
    },
    /// Circular Walker shells. The epoch of the geometry is drawn from the
    /// run seed.
    Shells { shells: Vec<Shell> },
}

fn default_ring_range() -> f64 {
    2.02e7
}

impl Default for ConstellationConfig {
    fn default() -> Self {
        ConstellationConfig::Shells { shells: vec![Shell::gps(), Shell::glonass(), Shell::galileo(), Shell::beidou()] }
    }
}

impl ConstellationConfig {
    /// Eight satellites spread over azimuth at 25° to 75° elevation, plus one
    /// near zenith.
    pub fn test_ring() -> Self {
        let mut sats: Vec<[f64; 2]> =
            (0..8).map(|k| [45.0 * k as f64 + 10.0, if k % 2 == 0 { 25.0 } else { 55.0 }]).collect();
        sats.push([200.0, 82.0]);
        ConstellationConfig::Ring { constellation: Constellation::Gps, sats, range: default_ring_range() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConstellationConfig::Ring { sats, range, .. } => {
                if sats.is_empty() || !(*range > 1e6) {
                    return Err(NavError::invalid("ring needs satellites at a range above 1000 km"));
                }
                if sats.iter().any(|s| !(s[1] > -90.0 && s[1] <= 90.0) || !s[0].is_finite()) {
                    return Err(NavError::invalid("ring elevation out of range"));
                }
            }
            ConstellationConfig::Shells { shells } => {
                if shells.is_empty() {
                    return Err(NavError::invalid("no constellation shells"));
                }
                for s in shells {
                    if s.planes == 0 || s.per_plane == 0 || !(s.radius > 7.0e6) || !(s.wavelength > 0.0) {
                        return Err(NavError::invalid(format!("invalid {} shell", s.constellation)));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Orbit {
    Fixed(Vector3<f64>),
    Circular { radius: f64, rate: f64, inclination: f64, raan: f64, u0: f64 },
}

#[derive(Clone, Debug)]
pub struct Satellite {
    pub key: SatKey,
    pub wavelength: f64,
    orbit: Orbit,
}

impl Satellite {
    /// ECEF position and velocity at `t`.
    pub fn state(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        match &self.orbit {
            Orbit::Fixed(p) => (*p, Vector3::zeros()),
            Orbit::Circular { radius, rate, inclination, raan, u0 } => {
                let u = u0 + rate * t;
                let (su, cu) = u.sin_cos();
                let plane = Rotation3::from_axis_angle(&Vector3::z_axis(), *raan)
                    * Rotation3::from_axis_angle(&Vector3::x_axis(), *inclination);
                let r_i = plane * Vector3::new(radius * cu, radius * su, 0.0);
                let v_i = plane * Vector3::new(-radius * rate * su, radius * rate * cu, 0.0);
                let w = Vector3::new(0.0, 0.0, EARTH_RATE);
                let spin: Matrix3<f64> = *Rotation3::from_axis_angle(&Vector3::z_axis(), -EARTH_RATE * t).matrix();
                (spin * r_i, spin * (v_i - w.cross(&r_i)))
            }
        }
    }
}

/// Instantiates the satellites. `origin` anchors ring geometry; `rng` picks
/// the orbital epoch for shells.
pub fn build_constellation<R: Rng>(
    cfg: &ConstellationConfig,
    origin: &Vector3<f64>,
    rng: &mut R,
) -> Result<Vec<Satellite>> {
    cfg.validate()?;
    let mut out = Vec::new();
    match cfg {
        ConstellationConfig::Ring { constellation, sats, range } => {
            let c_en = enu_to_ecef_at(origin);
            for (k, s) in sats.iter().enumerate() {
                let (az, el) = (s[0].to_radians(), s[1].to_radians());
                let d = Vector3::new(el.cos() * az.sin(), el.cos() * az.cos(), el.sin());
                out.push(Satellite {
                    key: SatKey { constellation: *constellation, sat_id: k as u32 + 1 },
                    wavelength: L1_WAVELENGTH,
                    orbit: Orbit::Fixed(origin + c_en * d * *range),
                });
            }
        }
        ConstellationConfig::Shells { shells } => {
            for shell in shells {
                let raan0 = rng.random::<f64>() * TAU;
                let u_off = rng.random::<f64>() * TAU;
                let total = shell.planes * shell.per_plane;
                let rate = (WGS84_GM / shell.radius.powi(3)).sqrt();
                for p in 0..shell.planes {
                    for s in 0..shell.per_plane {
                        let u0 = u_off
                            + TAU * s as f64 / shell.per_plane as f64
                            + TAU * (shell.phasing * p) as f64 / total as f64;
                        out.push(Satellite {
                            key: SatKey { constellation: shell.constellation, sat_id: p * shell.per_plane + s + 1 },
                            wavelength: shell.wavelength,
                            orbit: Orbit::Circular {
                                radius: shell.radius,
                                rate,
                                inclination: shell.inclination_deg.to_radians(),
                                raan: raan0 + TAU * p as f64 / shell.planes as f64,
                                u0,
                            },
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{elevation_azimuth, geodetic_to_ecef};
    use crate::rng::{stream, streams};
    use approx::assert_relative_eq;

    #[test]
    fn ring_reproduces_requested_angles() {
        let origin = geodetic_to_ecef(0.6, 2.0, 50.0);
        let sats =
            build_constellation(&ConstellationConfig::test_ring(), &origin, &mut stream(1, streams::GEOMETRY)).unwrap();
        let (el, az) = elevation_azimuth(&origin, &sats[1].state(0.0).0);
        assert_relative_eq!(el.to_degrees(), 55.0, epsilon = 1e-9);
        assert_relative_eq!(az.to_degrees(), 55.0, epsilon = 1e-9);
    }

    #[test]
    fn circular_orbit_velocity_matches_finite_difference() {
        let cfg = ConstellationConfig::default();
        let sats = build_constellation(&cfg, &Vector3::zeros(), &mut stream(3, streams::GEOMETRY)).unwrap();
        assert_eq!(sats.len(), 96);
        for s in sats.iter().step_by(7) {
            let t = 1234.5;
            let h = 0.01;
            let fd = (s.state(t + h).0 - s.state(t - h).0) / (2.0 * h);
            assert!((fd - s.state(t).1).norm() < 1e-4);
            assert_relative_eq!(s.state(t).0.norm(), s.state(0.0).0.norm(), max_relative = 1e-12);
        }
    }
}
