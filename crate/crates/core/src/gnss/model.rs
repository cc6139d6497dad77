use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::differencing::DdEpoch;
use crate::error::{NavError, Result};

/// Rows per non-pivot satellite, ordered code, Doppler, phase.
pub const ROWS_PER_SAT: usize = 3;

const SIGMA_FLOOR: f64 = 1e-4;
const PHASE_SIGMA_FLOOR: f64 = 1e-3;
// Keeps the mapping finite for satellites at or below the horizon.
const MIN_SIN_ELEVATION: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Code,
    Doppler,
    Phase,
}

impl RowKind {
    pub fn of_row(i: usize) -> RowKind {
        match i % ROWS_PER_SAT {
            0 => RowKind::Code,
            1 => RowKind::Doppler,
            _ => RowKind::Phase,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RowKind::Code => "code",
            RowKind::Doppler => "doppler",
            RowKind::Phase => "phase",
        }
    }
}

/// Unit vector from satellite to receiver.
pub fn los_vector(p_r: &Vector3<f64>, p_s: &Vector3<f64>) -> Result<Vector3<f64>> {
    let d = p_r - p_s;
    let n = d.norm();
    if !n.is_finite() {
        return Err(NavError::NonFinite("line of sight"));
    }
    if n == 0.0 {
        return Err(NavError::Coincident);
    }
    Ok(d / n)
}

/// Linearization point for one epoch: navigation state plus float DD
/// ambiguities in cycles. `nav_dim` is the width of the navigation block in
/// the Jacobian; position and velocity always occupy its first six columns.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub ambiguities: DVector<f64>,
    pub nav_dim: usize,
}

impl AugmentedState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, m: usize, nav_dim: usize) -> Self {
        AugmentedState { position, velocity, ambiguities: DVector::zeros(m), nav_dim }
    }

    fn check(&self, dd: &DdEpoch) -> Result<()> {
        if self.nav_dim < 6 {
            return Err(NavError::Dimension(format!("navigation block of width {} < 6", self.nav_dim)));
        }
        if self.ambiguities.len() != dd.len() {
            return Err(NavError::Dimension(format!(
                "{} ambiguities for {} double differences",
                self.ambiguities.len(),
                dd.len()
            )));
        }
        if !self.position.iter().chain(self.velocity.iter()).all(|v| v.is_finite()) {
            return Err(NavError::NonFinite("augmented state"));
        }
        Ok(())
    }
}

/// Observed minus predicted DD observables, `[code, doppler, phase]` per satellite.
pub fn predict_residuals(chi: &AugmentedState, dd: &DdEpoch) -> Result<DVector<f64>> {
    chi.check(dd)?;
    let mut dz = DVector::zeros(ROWS_PER_SAT * dd.len());
    for (s, m) in dd.measurements.iter().enumerate() {
        let range_dd = (chi.position - m.sat_position).norm() - (chi.position - m.pivot_position).norm();
        let los_dd = los_vector(&chi.position, &m.sat_position)? - los_vector(&chi.position, &m.pivot_position)?;
        let r = ROWS_PER_SAT * s;
        dz[r] = m.code - range_dd;
        dz[r + 1] = m.doppler - los_dd.dot(&chi.velocity);
        dz[r + 2] = m.phase - (range_dd + m.wavelength * chi.ambiguities[s]);
    }
    Ok(dz)
}

/// `3m x (nav_dim + m)` Jacobian of the predicted observables.
pub fn build_jacobian(chi: &AugmentedState, dd: &DdEpoch) -> Result<DMatrix<f64>> {
    chi.check(dd)?;
    let m = dd.len();
    let mut h = DMatrix::zeros(ROWS_PER_SAT * m, chi.nav_dim + m);
    for (s, meas) in dd.measurements.iter().enumerate() {
        let los_dd = los_vector(&chi.position, &meas.sat_position)? - los_vector(&chi.position, &meas.pivot_position)?;
        let r = ROWS_PER_SAT * s;
        for k in 0..3 {
            h[(r, k)] = los_dd[k];
            h[(r + 1, 3 + k)] = los_dd[k];
            h[(r + 2, k)] = los_dd[k];
        }
        h[(r + 2, chi.nav_dim + s)] = meas.wavelength;
    }
    Ok(h)
}

/// Zenith standard deviations and elevation mapping for undifferenced
/// observables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Zenith code sigma (m).
    pub code: f64,
    /// Zenith phase sigma (m).
    pub phase: f64,
    /// Zenith range-rate sigma (m/s).
    pub doppler: f64,
    /// `sigma(el) = zenith / sin(el)^exponent`.
    pub exponent: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { code: 0.3, phase: 0.003, doppler: 0.05, exponent: 1.0 }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("code", self.code), ("phase", self.phase), ("doppler", self.doppler)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NavError::invalid(format!("noise model {name} sigma must be positive")));
            }
        }
        if !(self.exponent >= 0.0 && self.exponent.is_finite()) {
            return Err(NavError::invalid("noise model exponent must be non-negative"));
        }
        Ok(())
    }

    pub fn sigma(&self, kind: RowKind, el: f64) -> f64 {
        let zenith = match kind {
            RowKind::Code => self.code,
            RowKind::Doppler => self.doppler,
            RowKind::Phase => self.phase,
        };
        let s = zenith / el.sin().max(MIN_SIN_ELEVATION).powf(self.exponent);
        let floor = if kind == RowKind::Phase { PHASE_SIGMA_FLOOR } else { SIGMA_FLOOR };
        s.max(floor)
    }

    /// Zero-mean standard deviation of a DD observable.
    pub fn dd_sigma(&self, kind: RowKind, el_sat: f64, el_pivot: f64) -> f64 {
        self.sigma(kind, el_sat).hypot(self.sigma(kind, el_pivot))
    }
}

/// `zenith_sigma / sin(el)`.
pub fn elevation_sigma(el: f64, zenith_sigma: f64) -> f64 {
    zenith_sigma / el.sin().max(MIN_SIN_ELEVATION)
}

/// Diagonal DD variances, `sigma_s^2 + sigma_o^2` per row.
pub fn build_noise(dd: &DdEpoch, nm: &NoiseModel) -> DVector<f64> {
    let mut var = DVector::zeros(ROWS_PER_SAT * dd.len());
    for (s, m) in dd.measurements.iter().enumerate() {
        for j in 0..ROWS_PER_SAT {
            let kind = RowKind::of_row(j);
            let a = nm.sigma(kind, m.elevation);
            let b = nm.sigma(kind, m.pivot_elevation);
            var[ROWS_PER_SAT * s + j] = a * a + b * b;
        }
    }
    var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnss::{Constellation, DdMeasurement, SatKey};
    use proptest::prelude::*;

    fn key(id: u32) -> SatKey {
        SatKey { constellation: Constellation::Gps, sat_id: id }
    }

    fn geometry_epoch(p: &Vector3<f64>, v: &Vector3<f64>, sats: &[Vector3<f64>], n: &[f64]) -> DdEpoch {
        let o = sats[0];
        let lam = 0.19;
        let ms = sats[1..]
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let r = (p - s).norm() - (p - o).norm();
                let los = (p - s).normalize() - (p - o).normalize();
                DdMeasurement {
                    sat: key(i as u32 + 2),
                    pivot: key(1),
                    code: r,
                    doppler: los.dot(v),
                    phase: r + lam * n[i],
                    wavelength: lam,
                    sat_position: *s,
                    pivot_position: o,
                    elevation: 0.6,
                    pivot_elevation: 1.2,
                }
            })
            .collect();
        DdEpoch { t: 0.0, measurements: ms }
    }

    fn sats() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(2.0e7, 1.0e6, 1.5e7),
            Vector3::new(1.2e7, -1.3e7, 1.9e7),
            Vector3::new(1.6e7, 1.5e7, 1.4e7),
            Vector3::new(2.4e7, 2.0e6, -3.0e6),
        ]
    }

    #[test]
    fn los_examples() {
        let l = los_vector(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 2.02e7)).unwrap();
        assert!((l - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
        assert!(matches!(los_vector(&Vector3::zeros(), &Vector3::zeros()), Err(NavError::Coincident)));
    }

    #[test]
    fn los_is_range_gradient() {
        let pr = Vector3::new(6.37e6, 1.0e3, 2.0e3);
        let ps = Vector3::new(2.0e7, 1.0e7, 1.0e7);
        let d = Vector3::new(0.3, -0.2, 0.5);
        let fd = (pr + d - ps).norm() - (pr - ps).norm();
        let lin = los_vector(&pr, &ps).unwrap().dot(&d);
        assert!((fd - lin).abs() / lin.abs() < 1e-6);
    }

    #[test]
    fn residual_is_zero_at_truth() {
        let p = Vector3::new(6.37e6, 0.0, 0.0);
        let v = Vector3::new(0.0, 10.0, 1.0);
        let dd = geometry_epoch(&p, &v, &sats(), &[0.0; 3]);
        let chi = AugmentedState::new(p, v, 3, 15);
        assert!(predict_residuals(&chi, &dd).unwrap().amax() < 1e-6);
    }

    #[test]
    fn ambiguity_offsets_phase_linearly() {
        let p = Vector3::new(6.37e6, 0.0, 0.0);
        let v = Vector3::zeros();
        let dd = geometry_epoch(&p, &v, &sats(), &[3.0, 0.0, 0.0]);
        let chi = AugmentedState::new(p, v, 3, 15);
        let dz = predict_residuals(&chi, &dd).unwrap();
        assert!((dz[2] - 0.57).abs() < 1e-6);
        assert!(dz[0].abs() < 1e-6);
    }

    #[test]
    fn jacobian_shape_and_structure() {
        let p = Vector3::new(6.37e6, 0.0, 0.0);
        let dd = geometry_epoch(&p, &Vector3::zeros(), &sats()[..2], &[0.0]);
        let chi = AugmentedState::new(p, Vector3::zeros(), 1, 15);
        let h = build_jacobian(&chi, &dd).unwrap();
        assert_eq!(h.shape(), (3, 16));
        assert!(h.view((0, 3), (1, 13)).iter().all(|v| *v == 0.0));
        assert!(h.view((1, 0), (1, 3)).iter().all(|v| *v == 0.0));
        assert!(h.view((1, 6), (1, 10)).iter().all(|v| *v == 0.0));
        assert!(h.view((2, 3), (1, 12)).iter().all(|v| *v == 0.0));
        assert_eq!(h[(2, 15)], 0.19);
        assert_eq!(h[(0, 15)], 0.0);
        assert_eq!(h[(1, 15)], 0.0);
    }

    #[test]
    fn noise_examples() {
        assert!((elevation_sigma(std::f64::consts::FRAC_PI_2, 0.3) - 0.3).abs() < 1e-15);
        assert!((elevation_sigma(30f64.to_radians(), 0.3) - 0.6).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for d in 10..=90 {
            let s = elevation_sigma((d as f64).to_radians(), 0.3);
            assert!(s <= prev);
            prev = s;
        }
        let p = Vector3::new(6.37e6, 0.0, 0.0);
        let dd = geometry_epoch(&p, &Vector3::zeros(), &sats(), &[0.0; 3]);
        let var = build_noise(&dd, &NoiseModel::default());
        for s in 0..3 {
            assert!(var[3 * s + 2] < var[3 * s]);
            assert!(var[3 * s] > 0.0);
        }
    }

    #[test]
    fn dd_variance_sums_members() {
        let nm = NoiseModel { code: 0.3, exponent: 0.0, ..NoiseModel::default() };
        let half_pi = std::f64::consts::FRAC_PI_2;
        assert!((nm.dd_sigma(RowKind::Code, half_pi, half_pi).powi(2) - 2.0 * 0.09).abs() < 1e-15);
        let a = nm.sigma(RowKind::Code, 0.5);
        let b = NoiseModel { code: 0.4, ..nm.clone() }.sigma(RowKind::Code, 0.5);
        assert!((a * a + b * b - 0.25).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn residual_difference_matches_jacobian(
            dp in prop::array::uniform3(-1.0f64..1.0),
            dv in prop::array::uniform3(-1.0f64..1.0),
            dn in prop::array::uniform3(-1.0f64..1.0),
            scale in 1e-3f64..1.0,
        ) {
            let p = Vector3::new(6.37e6, 1.0e4, -2.0e4);
            let v = Vector3::new(5.0, -3.0, 0.5);
            let dd = geometry_epoch(&p, &v, &sats(), &[1.0, -4.0, 7.0]);
            let chi = AugmentedState::new(p, v, 3, 15);
            let mut d = DVector::zeros(18);
            for k in 0..3 {
                d[k] = dp[k] * scale;
                d[3 + k] = dv[k] * scale;
                d[15 + k] = dn[k] * scale;
            }
            let mut moved = chi.clone();
            moved.position += Vector3::new(d[0], d[1], d[2]);
            moved.velocity += Vector3::new(d[3], d[4], d[5]);
            moved.ambiguities += d.rows(15, 3);
            let fd = predict_residuals(&moved, &dd).unwrap() - predict_residuals(&chi, &dd).unwrap();
            let lin = -build_jacobian(&chi, &dd).unwrap() * &d;
            prop_assert!((&fd - &lin).norm() <= 1e-5 * lin.norm());
        }
    }
}
