use nalgebra::UnitQuaternion;

use super::state::{ErrorState, ImuSample, NavState, ATT, BA, BG, POS, VEL};
use crate::error::{NavError, Result};
use crate::frames::EarthModel;

/// Advances `nav` by `dt` using one IMU sample held constant over the interval.
///
/// Attitude: `q+ = q_earth(dt)^-1 * q * exp(w dt)`; velocity uses the
/// mid-interval attitude; position integrates velocity with the trapezoid rule.
pub fn mechanize(nav: &NavState, s: &ImuSample, dt: f64, earth: EarthModel) -> Result<NavState> {
    nav.check()?;
    if !s.is_finite() || !dt.is_finite() {
        return Err(NavError::NonFinite("IMU sample"));
    }
    if dt <= 0.0 {
        return Err(NavError::invalid(format!("non-positive time step {dt}")));
    }
    let f = s.specific_force - nav.accel_bias;
    let theta = (s.angular_rate - nav.gyro_bias) * dt;
    let omega = earth.rotation_rate();

    let earth_turn = UnitQuaternion::from_scaled_axis(omega * dt);
    let earth_half = UnitQuaternion::from_scaled_axis(omega * (0.5 * dt));
    let attitude = earth_turn.inverse() * nav.attitude * UnitQuaternion::from_scaled_axis(theta);
    let mid = earth_half.inverse() * nav.attitude * UnitQuaternion::from_scaled_axis(theta * 0.5);

    let accel = mid * f + earth.gravity(&nav.position) - 2.0 * omega.cross(&nav.velocity);
    let velocity = nav.velocity + accel * dt;
    let position = nav.position + (nav.velocity + velocity) * (0.5 * dt);

    Ok(NavState {
        t: nav.t + dt,
        position,
        velocity,
        attitude: UnitQuaternion::new_normalize(attitude.into_inner()),
        accel_bias: nav.accel_bias,
        gyro_bias: nav.gyro_bias,
    })
}

/// `nav ⊞ dx`: additive on position, velocity and biases, right-multiplicative
/// (body-frame) on attitude.
pub fn boxplus(nav: &NavState, dx: &ErrorState) -> NavState {
    let dtheta = dx.fixed_rows::<3>(ATT).into_owned();
    let q = nav.attitude * UnitQuaternion::from_scaled_axis(dtheta);
    NavState {
        t: nav.t,
        position: nav.position + dx.fixed_rows::<3>(POS),
        velocity: nav.velocity + dx.fixed_rows::<3>(VEL),
        attitude: UnitQuaternion::new_normalize(q.into_inner()),
        accel_bias: nav.accel_bias + dx.fixed_rows::<3>(BA),
        gyro_bias: nav.gyro_bias + dx.fixed_rows::<3>(BG),
    }
}

/// Inverse of [`boxplus`]: the error state taking `from` to `to`.
pub fn error_between(from: &NavState, to: &NavState) -> ErrorState {
    let mut dx = ErrorState::zeros();
    dx.fixed_rows_mut::<3>(POS).copy_from(&(to.position - from.position));
    dx.fixed_rows_mut::<3>(VEL).copy_from(&(to.velocity - from.velocity));
    let dq = from.attitude.inverse() * to.attitude;
    dx.fixed_rows_mut::<3>(ATT).copy_from(&dq.scaled_axis());
    dx.fixed_rows_mut::<3>(BA).copy_from(&(to.accel_bias - from.accel_bias));
    dx.fixed_rows_mut::<3>(BG).copy_from(&(to.gyro_bias - from.gyro_bias));
    dx
}

/// Applies a posterior error-state estimate to the nominal state.
pub fn apply_correction(nav: &NavState, dx: &ErrorState) -> Result<NavState> {
    if !dx.iter().all(|v| v.is_finite()) {
        return Err(NavError::NonFinite("error-state correction"));
    }
    let angle = dx.fixed_rows::<3>(ATT).norm();
    if angle > std::f64::consts::FRAC_PI_2 {
        return Err(NavError::LargeAttitudeCorrection(angle));
    }
    Ok(boxplus(nav, dx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn nav0() -> NavState {
        NavState {
            t: 0.0,
            position: Vector3::new(1.0, 2.0, 3.0),
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            accel_bias: Vector3::new(0.01, -0.02, 0.03),
            gyro_bias: Vector3::new(1e-3, 2e-3, -1e-3),
        }
    }

    #[test]
    fn calibrated_rest_is_fixed_point() {
        let nav = nav0();
        let s = ImuSample { t: 0.5, specific_force: nav.accel_bias, angular_rate: nav.gyro_bias };
        let out = mechanize(&nav, &s, 0.5, EarthModel::Inert).unwrap();
        assert_relative_eq!(out.position, nav.position, epsilon = 1e-15);
        assert_relative_eq!(out.velocity, nav.velocity, epsilon = 1e-15);
        assert!(out.attitude.angle_to(&nav.attitude) < 1e-15);
    }

    #[test]
    fn pure_yaw_rotation_matches_quaternion_exponential() {
        let mut nav = nav0();
        nav.gyro_bias = Vector3::zeros();
        let s = ImuSample { t: 1.0, specific_force: nav.accel_bias, angular_rate: Vector3::new(0.0, 0.0, 0.1) };
        let out = mechanize(&nav, &s, 1.0, EarthModel::Inert).unwrap();
        // closed form: q(t) = [cos(wt/2), 0, 0, sin(wt/2)]
        let expected =
            UnitQuaternion::from_quaternion(nalgebra::Quaternion::new((0.05f64).cos(), 0.0, 0.0, (0.05f64).sin()));
        assert!(out.attitude.angle_to(&expected) < 1e-14);
        assert_relative_eq!(out.position, nav.position, epsilon = 1e-15);
        assert_relative_eq!(out.velocity, nav.velocity, epsilon = 1e-15);
    }

    #[test]
    fn constant_specific_force_integrates_exactly() {
        let mut nav = nav0();
        nav.accel_bias = Vector3::zeros();
        nav.gyro_bias = Vector3::zeros();
        let start = nav.position;
        for k in 1..=200 {
            let s = ImuSample {
                t: k as f64 * 0.01,
                specific_force: Vector3::new(1.0, 0.0, 0.0),
                angular_rate: Vector3::zeros(),
            };
            nav = mechanize(&nav, &s, 0.01, EarthModel::Inert).unwrap();
        }
        assert_relative_eq!(nav.velocity, Vector3::new(2.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(nav.position - start, Vector3::new(2.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let nav = nav0();
        let s = ImuSample { t: 0.0, specific_force: Vector3::zeros(), angular_rate: Vector3::zeros() };
        assert!(mechanize(&nav, &s, 0.0, EarthModel::Wgs84).is_err());
        assert!(mechanize(&nav, &s, -0.1, EarthModel::Wgs84).is_err());
        let bad = ImuSample { specific_force: Vector3::new(f64::NAN, 0.0, 0.0), ..s };
        assert!(matches!(mechanize(&nav, &bad, 0.01, EarthModel::Wgs84), Err(NavError::NonFinite(_))));
    }

    #[test]
    fn quaternion_norm_survives_a_million_steps() {
        let mut nav = nav0();
        nav.position = crate::frames::geodetic_to_ecef(0.5, -1.7, 100.0);
        let s = ImuSample {
            t: 0.0,
            specific_force: Vector3::new(0.3, -0.2, 9.8),
            angular_rate: Vector3::new(0.31, -0.17, 0.53),
        };
        for _ in 0..1_000_000 {
            nav.velocity = Vector3::zeros();
            nav = mechanize(&nav, &s, 1.0 / 150.0, EarthModel::Wgs84).unwrap();
            assert!((nav.attitude.coords.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_correction_is_identity() {
        let nav = nav0();
        assert_eq!(apply_correction(&nav, &ErrorState::zeros()).unwrap(), nav);
    }

    #[test]
    fn small_angle_correction_about_z() {
        let nav = nav0();
        let mut dx = ErrorState::zeros();
        dx[ATT + 2] = 1e-6;
        let out = apply_correction(&nav, &dx).unwrap();
        let rel = nav.attitude.inverse() * out.attitude;
        assert_relative_eq!(rel.scaled_axis(), Vector3::new(0.0, 0.0, 1e-6), epsilon = 1e-12);
    }

    #[test]
    fn large_attitude_correction_rejected() {
        let mut dx = ErrorState::zeros();
        dx[ATT] = 2.0;
        assert!(matches!(apply_correction(&nav0(), &dx), Err(NavError::LargeAttitudeCorrection(_))));
    }

    proptest! {
        #[test]
        fn correction_round_trip(v in proptest::collection::vec(-1.0f64..1.0, 15)) {
            let mut nav = nav0();
            nav.attitude = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1);
            let mut dx = ErrorState::from_column_slice(&v);
            dx.fixed_rows_mut::<3>(ATT).scale_mut(0.5);
            let there = apply_correction(&nav, &dx).unwrap();
            let back = apply_correction(&there, &(-dx)).unwrap();
            prop_assert!((back.position - nav.position).norm() < 1e-10);
            prop_assert!((back.velocity - nav.velocity).norm() < 1e-10);
            prop_assert!(back.attitude.angle_to(&nav.attitude) < 1e-10);
            prop_assert!((back.accel_bias - nav.accel_bias).norm() < 1e-10);
            prop_assert!((back.gyro_bias - nav.gyro_bias).norm() < 1e-10);
        }
    }
}
