//! WGS-84 Earth model, geodetic conversions and local tangent frames.

use nalgebra::{Matrix3, Vector3};

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);
pub const WGS84_GM: f64 = 3.986_004_418e14;
pub const WGS84_J2: f64 = 1.082_629_821_3e-3;
/// Earth rotation rate (rad/s).
pub const EARTH_RATE: f64 = 7.292_115e-5;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn geodetic_to_ecef(lat: f64, lon: f64, h: f64) -> Vector3<f64> {
    let (slat, clat) = lat.sin_cos();
    let (slon, clon) = lon.sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * slat * slat).sqrt();
    Vector3::new((n + h) * clat * clon, (n + h) * clat * slon, (n * (1.0 - WGS84_E2) + h) * slat)
}

/// Returns (lat, lon, h). Iterative; converges to sub-millimetre in a few passes.
pub fn ecef_to_geodetic(p: &Vector3<f64>) -> (f64, f64, f64) {
    let lon = p.y.atan2(p.x);
    let rho = (p.x * p.x + p.y * p.y).sqrt();
    let mut lat = p.z.atan2(rho * (1.0 - WGS84_E2));
    let mut h = 0.0;
    for _ in 0..8 {
        let s = lat.sin();
        let n = WGS84_A / (1.0 - WGS84_E2 * s * s).sqrt();
        h = if lat.cos().abs() > 1e-12 { rho / lat.cos() - n } else { p.z.abs() - n * (1.0 - WGS84_E2) };
        lat = p.z.atan2(rho * (1.0 - WGS84_E2 * n / (n + h)));
    }
    (lat, lon, h)
}

/// Rotation whose columns are the East, North and Up axes expressed in ECEF,
/// i.e. `v_ecef = C * v_enu`.
pub fn enu_to_ecef(lat: f64, lon: f64) -> Matrix3<f64> {
    let (slat, clat) = lat.sin_cos();
    let (slon, clon) = lon.sin_cos();
    Matrix3::new(-slon, -slat * clon, clat * clon, clon, -slat * slon, clat * slon, 0.0, clat, slat)
}

pub fn enu_to_ecef_at(p: &Vector3<f64>) -> Matrix3<f64> {
    let (lat, lon, _) = ecef_to_geodetic(p);
    enu_to_ecef(lat, lon)
}

/// Elevation and azimuth (rad) of `target` seen from `from`.
pub fn elevation_azimuth(from: &Vector3<f64>, target: &Vector3<f64>) -> (f64, f64) {
    let c = enu_to_ecef_at(from);
    let d = c.transpose() * (target - from);
    let el = d.z.atan2((d.x * d.x + d.y * d.y).sqrt());
    let az = d.x.atan2(d.y);
    (el, az)
}

/// Which terrestrial effects the strapdown equations include.
///
/// `Inert` switches off gravity and Earth rotation so that analytic fixtures
/// (pure rotations, constant acceleration) can be checked exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EarthModel {
    #[default]
    Wgs84,
    Inert,
}

impl EarthModel {
    /// Earth rotation vector in ECEF.
    pub fn rotation_rate(&self) -> Vector3<f64> {
        match self {
            EarthModel::Wgs84 => Vector3::new(0.0, 0.0, EARTH_RATE),
            EarthModel::Inert => Vector3::zeros(),
        }
    }

    /// Gravity (gravitation with J2 plus centrifugal) in ECEF.
    pub fn gravity(&self, p: &Vector3<f64>) -> Vector3<f64> {
        match self {
            EarthModel::Inert => Vector3::zeros(),
            EarthModel::Wgs84 => {
                let r2 = p.norm_squared();
                let r = r2.sqrt();
                let z2 = p.z * p.z / r2;
                let k = 1.5 * WGS84_J2 * WGS84_A * WGS84_A / r2;
                let gm_r3 = WGS84_GM / (r2 * r);
                let gravitation = Vector3::new(
                    -gm_r3 * p.x * (1.0 + k * (1.0 - 5.0 * z2)),
                    -gm_r3 * p.y * (1.0 + k * (1.0 - 5.0 * z2)),
                    -gm_r3 * p.z * (1.0 + k * (3.0 - 5.0 * z2)),
                );
                let w2 = EARTH_RATE * EARTH_RATE;
                gravitation + Vector3::new(w2 * p.x, w2 * p.y, 0.0)
            }
        }
    }

    /// Gradient of [`EarthModel::gravity`] with respect to position, using the
    /// central-field term only for the gravitation part.
    pub fn gravity_gradient(&self, p: &Vector3<f64>) -> Matrix3<f64> {
        match self {
            EarthModel::Inert => Matrix3::zeros(),
            EarthModel::Wgs84 => {
                let r = p.norm();
                let u = p / r;
                let w2 = EARTH_RATE * EARTH_RATE;
                -WGS84_GM / (r * r * r) * (Matrix3::identity() - 3.0 * u * u.transpose())
                    + Matrix3::from_diagonal(&Vector3::new(w2, w2, 0.0))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn geodetic_round_trip() {
        let (lat, lon, h) = (30.2849_f64.to_radians(), (-97.7341_f64).to_radians(), 150.0);
        let p = geodetic_to_ecef(lat, lon, h);
        let (lat2, lon2, h2) = ecef_to_geodetic(&p);
        assert_relative_eq!(lat, lat2, epsilon = 1e-12);
        assert_relative_eq!(lon, lon2, epsilon = 1e-12);
        assert_relative_eq!(h, h2, epsilon = 1e-6);
    }

    #[test]
    fn enu_is_orthonormal_and_up_matches_normal() {
        let c = enu_to_ecef(0.5, -1.2);
        assert_relative_eq!(c.transpose() * c, Matrix3::identity(), epsilon = 1e-14);
        assert_relative_eq!(c.determinant(), 1.0, epsilon = 1e-14);
        let p0 = geodetic_to_ecef(0.5, -1.2, 0.0);
        let p1 = geodetic_to_ecef(0.5, -1.2, 1.0);
        assert_relative_eq!(p1 - p0, c.column(2).into_owned(), epsilon = 1e-8);
    }

    #[test]
    fn gravity_magnitude_and_direction() {
        let p = geodetic_to_ecef(0.53, -1.7, 100.0);
        let g = EarthModel::Wgs84.gravity(&p);
        assert!((g.norm() - 9.79).abs() < 0.03, "{}", g.norm());
        let up = enu_to_ecef_at(&p).column(2).into_owned();
        // plumb line within a few arcseconds of the ellipsoid normal
        assert!((-g.normalize()).dot(&up) > 1.0 - 1e-9);
    }

    #[test]
    fn gravity_gradient_matches_finite_difference() {
        let p = geodetic_to_ecef(0.53, -1.7, 100.0);
        let gg = EarthModel::Wgs84.gravity_gradient(&p);
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = 10.0;
            let fd = (EarthModel::Wgs84.gravity(&(p + d)) - EarthModel::Wgs84.gravity(&(p - d))) / 20.0;
            let col = gg.column(k).into_owned();
            assert!((fd - col).norm() < 1e-2 * col.norm() + 1e-9);
        }
    }
}
