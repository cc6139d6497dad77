use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::state::ImuSample;
use crate::error::{NavError, Result};
use crate::frames::{enu_to_ecef_at, EarthModel};

/// Running mean of the specific force while the vehicle is stationary.
#[derive(Clone, Debug, Default)]
pub struct LevelingAccumulator {
    sum: Vector3<f64>,
    count: usize,
}

impl LevelingAccumulator {
    pub fn add(&mut self, s: &ImuSample) {
        self.sum += s.specific_force;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &LevelingAccumulator) {
        self.sum += other.sum;
        self.count += other.count;
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Option<Vector3<f64>> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Attitude from a levelled specific-force direction and a forward direction.
///
/// `mean_force` (body) is matched exactly to the local plumb line; the body
/// x axis is aligned with the horizontal part of `forward_ecef`. When no
/// usable forward direction exists, `fallback_heading` (rad, counter-clockwise
/// from East) is used.
pub fn level_and_align(
    mean_force: &Vector3<f64>,
    position: &Vector3<f64>,
    forward_ecef: Option<&Vector3<f64>>,
    fallback_heading: f64,
    earth: EarthModel,
) -> Result<UnitQuaternion<f64>> {
    let enu = enu_to_ecef_at(position);
    let up_e = match earth {
        EarthModel::Wgs84 => -earth.gravity(position).normalize(),
        EarthModel::Inert => enu.column(2).into_owned(),
    };
    if mean_force.norm() < 1e-6 {
        return Err(NavError::invalid("specific force too small to level"));
    }
    let up_b = mean_force.normalize();

    let horizontal = |v: &Vector3<f64>| v - up_e * v.dot(&up_e);
    let fwd = forward_ecef
        .map(horizontal)
        .filter(|v| v.norm() > 1e-6)
        .unwrap_or_else(|| {
            let (s, c) = fallback_heading.sin_cos();
            horizontal(&(enu.column(0) * c + enu.column(1) * s))
        })
        .normalize();

    let fwd_b = Vector3::x() - up_b * up_b.x;
    if fwd_b.norm() < 1e-6 {
        return Err(NavError::invalid("body x axis is vertical; heading undefined"));
    }
    let triad = |a: Vector3<f64>, b: Vector3<f64>| {
        let t2 = a.cross(&b).normalize();
        Matrix3::from_columns(&[a, t2, a.cross(&t2)])
    };
    let m_e = triad(up_e, fwd);
    let m_b = triad(up_b, fwd_b.normalize());
    let c = m_e * m_b.transpose();
    Ok(UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(c)))
}
