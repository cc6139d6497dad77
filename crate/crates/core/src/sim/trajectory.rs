use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::frames::{enu_to_ecef, geodetic_to_ecef};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TrajectoryProfile {
    Stationary,
    /// Counter-clockwise circuit starting at the origin heading East, with a
    /// quintic speed ramp.
    Circle {
        radius: f64,
        speed: f64,
        ramp: f64,
    },
    /// `[t, east, north, up]` knots joined by a clamped cubic spline.
    Waypoints {
        points: Vec<[f64; 4]>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Origin {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub height: f64,
}

impl Default for Origin {
    fn default() -> Self {
        Origin { lat_deg: 30.2849, lon_deg: -97.7341, height: 160.0 }
    }
}

impl Origin {
    pub fn ecef(&self) -> Vector3<f64> {
        geodetic_to_ecef(self.lat_deg.to_radians(), self.lon_deg.to_radians(), self.height)
    }

    pub fn enu_rotation(&self) -> Matrix3<f64> {
        enu_to_ecef(self.lat_deg.to_radians(), self.lon_deg.to_radians())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
}

/// Clamped cubic spline through `(t_i, y_i)` with zero end slopes.
#[derive(Clone, Debug)]
struct Spline {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl Spline {
    fn new(t: Vec<f64>, y: Vec<f64>) -> Spline {
        let n = t.len();
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        // Tridiagonal system for the knot curvatures with clamped ends.
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut r = vec![0.0; n];
        b[0] = h[0] / 3.0;
        c[0] = h[0] / 6.0;
        r[0] = (y[1] - y[0]) / h[0];
        for i in 1..n - 1 {
            a[i] = h[i - 1] / 6.0;
            b[i] = (h[i - 1] + h[i]) / 3.0;
            c[i] = h[i] / 6.0;
            r[i] = (y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1];
        }
        a[n - 1] = h[n - 2] / 6.0;
        b[n - 1] = h[n - 2] / 3.0;
        r[n - 1] = -(y[n - 1] - y[n - 2]) / h[n - 2];
        for i in 1..n {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            r[i] -= w * r[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = r[n - 1] / b[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (r[i] - c[i] * m[i + 1]) / b[i];
        }
        Spline { t, y, m }
    }

    /// Value and first two derivatives; constant outside the knot range.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.t.len();
        if x <= self.t[0] {
            return (self.y[0], 0.0, 0.0);
        }
        if x >= self.t[n - 1] {
            return (self.y[n - 1], 0.0, 0.0);
        }
        let i = self.t.partition_point(|&k| k <= x) - 1;
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - x) / h;
        let b = (x - self.t[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let y = a * self.y[i] + b * self.y[i + 1] + ((a.powi(3) - a) * m0 + (b.powi(3) - b) * m1) * h * h / 6.0;
        let dy = (self.y[i + 1] - self.y[i]) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let ddy = a * m0 + b * m1;
        (y, dy, ddy)
    }
}

/// Kinematics in the local tangent plane at the origin.
#[derive(Clone, Debug)]
pub struct Trajectory {
    profile: TrajectoryProfile,
    splines: Option<[Spline; 3]>,
    prefix: f64,
    origin: Vector3<f64>,
    c_en: Matrix3<f64>,
    initial_heading: f64,
}

/// Position, velocity and heading (rad, counter-clockwise from East) in ENU.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalKinematics {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub heading: Option<f64>,
}

const HEADING_MIN_SPEED: f64 = 1e-3;

impl Trajectory {
    pub fn new(profile: &TrajectoryProfile, origin: &Origin, prefix: f64) -> Result<Self> {
        if !(prefix >= 0.0 && prefix.is_finite()) {
            return Err(NavError::invalid("stationary prefix must be non-negative"));
        }
        let mut initial_heading = 0.0;
        let splines = match profile {
            TrajectoryProfile::Stationary => None,
            TrajectoryProfile::Circle { radius, speed, ramp } => {
                if !(*radius > 0.0 && *speed >= 0.0 && *ramp > 0.0)
                    || ![radius, speed, ramp].iter().all(|v| v.is_finite())
                {
                    return Err(NavError::invalid("circle needs positive radius and ramp and non-negative speed"));
                }
                None
            }
            TrajectoryProfile::Waypoints { points } => {
                if points.len() < 2 {
                    return Err(NavError::invalid("at least two waypoints are required"));
                }
                if !points.iter().flatten().all(|v| v.is_finite()) {
                    return Err(NavError::NonFinite("waypoint"));
                }
                if points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    return Err(NavError::invalid("waypoint times must be strictly increasing"));
                }
                let first = Vector3::new(points[0][1], points[0][2], points[0][3]);
                let dir = points
                    .iter()
                    .map(|p| Vector3::new(p[1], p[2], 0.0) - Vector3::new(first.x, first.y, 0.0))
                    .find(|d| d.norm() > 1e-6)
                    .ok_or_else(|| NavError::invalid("waypoints never leave the first point horizontally"))?;
                initial_heading = dir.y.atan2(dir.x);
                let t: Vec<f64> = points.iter().map(|p| p[0]).collect();
                let axis = |k: usize| Spline::new(t.clone(), points.iter().map(|p| p[k + 1]).collect());
                Some([axis(0), axis(1), axis(2)])
            }
        };
        Ok(Trajectory {
            profile: profile.clone(),
            splines,
            prefix,
            origin: origin.ecef(),
            c_en: origin.enu_rotation(),
            initial_heading,
        })
    }

    pub fn prefix(&self) -> f64 {
        self.prefix
    }

    pub fn local(&self, t: f64) -> LocalKinematics {
        let tau = t - self.prefix;
        match &self.profile {
            TrajectoryProfile::Stationary => {
                LocalKinematics { position: Vector3::zeros(), velocity: Vector3::zeros(), heading: Some(0.0) }
            }
            TrajectoryProfile::Circle { radius, speed, ramp } => {
                let (s, sdot) = if tau <= 0.0 {
                    (0.0, 0.0)
                } else if tau < *ramp {
                    let u = tau / ramp;
                    let smooth = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
                    (speed * ramp * u.powi(4) * (2.5 - 3.0 * u + u * u), speed * smooth)
                } else {
                    (speed * (0.5 * ramp + tau - ramp), *speed)
                };
                let a = s / radius;
                LocalKinematics {
                    position: Vector3::new(radius * a.sin(), radius * (1.0 - a.cos()), 0.0),
                    velocity: Vector3::new(sdot * a.cos(), sdot * a.sin(), 0.0),
                    heading: Some(a),
                }
            }
            TrajectoryProfile::Waypoints { .. } => {
                let sp = self.splines.as_ref().expect("waypoint splines");
                let t0 = sp[0].t[0];
                let x = tau + t0;
                let e = sp[0].eval(x);
                let n = sp[1].eval(x);
                let u = sp[2].eval(x);
                let velocity = Vector3::new(e.1, n.1, u.1);
                let horizontal = velocity.xy().norm();
                let heading = if tau <= 0.0 {
                    Some(self.initial_heading)
                } else if horizontal > HEADING_MIN_SPEED {
                    Some(velocity.y.atan2(velocity.x))
                } else {
                    None
                };
                LocalKinematics { position: Vector3::new(e.0, n.0, u.0), velocity, heading }
            }
        }
    }

    /// ECEF position and velocity.
    pub fn ecef(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let k = self.local(t);
        (self.origin + self.c_en * k.position, self.c_en * k.velocity)
    }

    fn attitude(&self, heading: f64) -> UnitQuaternion<f64> {
        let c = self.c_en * Rotation3::from_axis_angle(&Vector3::z_axis(), heading).matrix();
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(c))
    }
}

/// Samples the trajectory at `rate` Hz over `[0, duration]`. The vehicle is
/// kept level in the origin tangent plane with its x axis along the
/// horizontal velocity; the heading is held while the vehicle is stopped.
pub fn gen_trajectory(traj: &Trajectory, duration: f64, rate: f64) -> Result<Vec<TruthRecord>> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(NavError::invalid("duration must be positive"));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(NavError::invalid("sampling rate must be positive"));
    }
    let n = (duration * rate).round() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut heading = traj.local(0.0).heading.unwrap_or(traj.initial_heading);
    for k in 0..=n {
        let t = k as f64 / rate;
        let local = traj.local(t);
        if let Some(h) = local.heading {
            heading = h;
        }
        let (position, velocity) = traj.ecef(t);
        out.push(TruthRecord {
            t,
            position,
            velocity,
            attitude: traj.attitude(heading),
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn circle() -> Trajectory {
        let p = TrajectoryProfile::Circle { radius: 80.0, speed: 8.0, ramp: 10.0 };
        Trajectory::new(&p, &Origin::default(), 5.0).unwrap()
    }

    #[test]
    fn stationary_profile_is_constant() {
        let tr = Trajectory::new(&TrajectoryProfile::Stationary, &Origin::default(), 0.0).unwrap();
        let truth = gen_trajectory(&tr, 3.0, 10.0).unwrap();
        for r in &truth {
            assert_eq!(r.position, truth[0].position);
            assert_eq!(r.velocity, Vector3::zeros());
        }
    }

    #[test]
    fn circle_speed_is_constant_after_ramp() {
        let tr = circle();
        for k in 0..200 {
            let t = 15.0 + 0.37 * k as f64;
            assert_relative_eq!(tr.local(t).velocity.norm(), 8.0, epsilon = 1e-12);
            let p = tr.local(t).position - Vector3::new(0.0, 80.0, 0.0);
            assert_relative_eq!(p.norm(), 80.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn velocity_matches_finite_difference() {
        let h = 1.0 / 150.0;
        let tr = circle();
        let wp = TrajectoryProfile::Waypoints {
            points: vec![
                [0.0, 0.0, 0.0, 0.0],
                [10.0, 50.0, 10.0, 1.0],
                [25.0, 80.0, 90.0, 0.0],
                [40.0, 0.0, 120.0, 2.0],
            ],
        };
        let tw = Trajectory::new(&wp, &Origin::default(), 2.0).unwrap();
        for traj in [&tr, &tw] {
            for k in 1..400 {
                let t = 0.1 * k as f64 + 0.05;
                let fd = (traj.ecef(t + h).0 - traj.ecef(t - h).0) / (2.0 * h);
                assert!((fd - traj.ecef(t).1).norm() < 1e-3, "t = {t}");
            }
        }
    }

    #[test]
    fn spline_passes_through_knots_with_clamped_ends() {
        let s = Spline::new(vec![0.0, 1.0, 3.0, 4.0], vec![0.0, 2.0, -1.0, 5.0]);
        for (t, y) in [(0.0, 0.0), (1.0, 2.0), (3.0, -1.0), (4.0, 5.0)] {
            assert_relative_eq!(s.eval(t).0, y, epsilon = 1e-12);
        }
        assert_relative_eq!(s.eval(1e-9).1, 0.0, epsilon = 1e-6);
        assert_relative_eq!(s.eval(4.0 - 1e-9).1, 0.0, epsilon = 1e-6);
        // Curvature is continuous across an interior knot.
        assert_relative_eq!(s.eval(1.0 - 1e-9).2, s.eval(1.0 + 1e-9).2, epsilon = 1e-6);
    }

    #[test]
    fn degenerate_waypoints_are_rejected() {
        let o = Origin::default();
        let one = TrajectoryProfile::Waypoints { points: vec![[0.0, 0.0, 0.0, 0.0]] };
        let back = TrajectoryProfile::Waypoints { points: vec![[1.0, 0.0, 0.0, 0.0], [1.0, 5.0, 0.0, 0.0]] };
        let still = TrajectoryProfile::Waypoints { points: vec![[0.0, 1.0, 1.0, 0.0], [5.0, 1.0, 1.0, 3.0]] };
        for p in [one, back, still] {
            assert!(Trajectory::new(&p, &o, 0.0).is_err());
        }
    }
}
