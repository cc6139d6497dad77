use nalgebra::{Matrix3, Vector3};

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::differencing::{DdEpoch, DdMeasurement};
use super::model::{los_vector, NoiseModel, RowKind};
use crate::error::{NavError, Result};

const MAX_ITER: usize = 20;
/// Confidence of the global residual test used for fault exclusion.
const FDE_CONFIDENCE: f64 = 0.999;

/// Linearized row: geometry, weight and residual at the solution.
type Row = (Vector3<f64>, f64, f64);

fn weighted_sq(rows: &[Row]) -> f64 {
    rows.iter().map(|(_, w, r)| w * r * r).sum()
}

/// Scales a least-squares covariance by the a-posteriori variance factor
/// when it exceeds one. Needs redundancy to say anything.
fn inflate(cov: Matrix3<f64>, weighted_sq: f64, rows: usize) -> Matrix3<f64> {
    if rows <= 3 {
        return cov;
    }
    cov * (weighted_sq / (rows - 3) as f64).max(1.0)
}

/// Row to exclude: the largest standardized residual, once the global
/// chi-square test fails. `None` when the test passes or excluding a row
/// would leave no redundancy to test with.
fn fault(rows: &[Row], cov: &Matrix3<f64>) -> Option<usize> {
    if rows.len() <= 4 {
        return None;
    }
    let limit = ChiSquared::new((rows.len() - 3) as f64).ok()?.inverse_cdf(FDE_CONFIDENCE);
    if weighted_sq(rows) <= limit {
        return None;
    }
    rows.iter()
        .map(|(g, w, r)| {
            let var = (1.0 / w - g.dot(&(cov * g))).max(1e-12 / w);
            r * r / var
        })
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

fn solve_code(
    ms: &[&DdMeasurement],
    initial: &Vector3<f64>,
    nm: &NoiseModel,
) -> Result<(Vector3<f64>, Matrix3<f64>, Vec<Row>)> {
    let mut p = *initial;
    for _ in 0..MAX_ITER {
        let rows = ms
            .iter()
            .map(|m| {
                let g = los_vector(&p, &m.sat_position)? - los_vector(&p, &m.pivot_position)?;
                let r = m.code - ((p - m.sat_position).norm() - (p - m.pivot_position).norm());
                let w = 1.0 / nm.dd_sigma(RowKind::Code, m.elevation, m.pivot_elevation).powi(2);
                Ok((g, w, r))
            })
            .collect::<Result<Vec<Row>>>()?;
        let (cov, step) = normal_solve(&rows, "code position fix")?;
        p += step;
        if step.norm() < 1e-6 {
            // residuals at the converged point equal these up to the step
            let rows = rows.into_iter().map(|(g, w, r)| (g, w, r - g.dot(&step))).collect();
            return Ok((p, cov, rows));
        }
    }
    Err(NavError::Divergence("code position fix did not converge".into()))
}

fn normal_solve(rows: &[Row], what: &'static str) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let mut n = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (g, w, r) in rows {
        n += *w * g * g.transpose();
        b += *w * *r * g;
    }
    let cov = n.try_inverse().ok_or(NavError::Singular(what))?;
    Ok((cov, cov * b))
}

/// Weighted Gauss-Newton rover position from DD code. Rows are excluded one
/// at a time while the residual test fails; the covariance is inflated by
/// the variance factor of the final fit.
pub fn code_position_fix(
    dd: &DdEpoch,
    initial: &Vector3<f64>,
    nm: &NoiseModel,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    if dd.len() < 3 {
        return Err(NavError::invalid(format!("position fix needs 3 double differences, got {}", dd.len())));
    }
    let mut active: Vec<&DdMeasurement> = dd.measurements.iter().collect();
    let mut start = *initial;
    loop {
        let (p, cov, rows) = solve_code(&active, &start, nm)?;
        match fault(&rows, &cov) {
            Some(i) => {
                active.remove(i);
                start = p;
            }
            None => return Ok((p, inflate(cov, weighted_sq(&rows), rows.len()))),
        }
    }
}

/// Weighted least-squares rover velocity from DD range rates at a known
/// position, with the same fault exclusion as the position fix.
pub fn doppler_velocity_fix(
    dd: &DdEpoch,
    position: &Vector3<f64>,
    nm: &NoiseModel,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    if dd.len() < 3 {
        return Err(NavError::invalid(format!("velocity fix needs 3 double differences, got {}", dd.len())));
    }
    let mut rows = dd
        .measurements
        .iter()
        .map(|m| {
            let g = los_vector(position, &m.sat_position)? - los_vector(position, &m.pivot_position)?;
            let w = 1.0 / nm.dd_sigma(RowKind::Doppler, m.elevation, m.pivot_elevation).powi(2);
            Ok((g, w, m.doppler))
        })
        .collect::<Result<Vec<Row>>>()?;
    loop {
        let (cov, v) = normal_solve(&rows, "doppler velocity fix")?;
        let resid: Vec<Row> = rows.iter().map(|(g, w, z)| (*g, *w, z - g.dot(&v))).collect();
        match fault(&resid, &cov) {
            Some(i) => {
                rows.remove(i);
            }
            None => return Ok((v, inflate(cov, weighted_sq(&resid), resid.len()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnss::{Constellation, DdMeasurement, SatKey};

    fn epoch(p: &Vector3<f64>, v: &Vector3<f64>, pivot: usize) -> DdEpoch {
        let sats = [
            Vector3::new(2.0e7, 1.0e6, 1.5e7),
            Vector3::new(1.2e7, -1.3e7, 1.9e7),
            Vector3::new(1.6e7, 1.5e7, 1.4e7),
            Vector3::new(2.4e7, 2.0e6, -3.0e6),
            Vector3::new(2.1e7, -9.0e6, -6.0e6),
            Vector3::new(1.9e7, 8.0e6, -1.2e7),
            Vector3::new(2.2e7, -1.4e7, 4.0e6),
        ];
        let o = sats[pivot];
        let key = |i: usize| SatKey { constellation: Constellation::Gps, sat_id: i as u32 + 1 };
        let measurements = (0..sats.len())
            .filter(|i| *i != pivot)
            .map(|i| {
                let s = sats[i];
                let r = (p - s).norm() - (p - o).norm();
                DdMeasurement {
                    sat: key(i),
                    pivot: key(pivot),
                    code: r,
                    doppler: ((p - s).normalize() - (p - o).normalize()).dot(v),
                    phase: r,
                    wavelength: 0.19,
                    sat_position: s,
                    pivot_position: o,
                    elevation: 0.7,
                    pivot_elevation: 0.9,
                }
            })
            .collect();
        DdEpoch { t: 0.0, measurements }
    }

    #[test]
    fn recovers_noiseless_position_and_velocity() {
        let p = Vector3::new(6.371e6, 2.0e3, -1.0e3);
        let v = Vector3::new(3.0, -12.0, 0.4);
        let dd = epoch(&p, &v, 0);
        let nm = NoiseModel::default();
        let (est, _) = code_position_fix(&dd, &(p + Vector3::new(800.0, -500.0, 300.0)), &nm).unwrap();
        assert!((est - p).norm() < 1e-6);
        let (vel, _) = doppler_velocity_fix(&dd, &est, &nm).unwrap();
        assert!((vel - v).norm() < 1e-6);
    }

    #[test]
    fn pivot_choice_does_not_change_noiseless_fix() {
        let p = Vector3::new(6.371e6, 2.0e3, -1.0e3);
        let nm = NoiseModel::default();
        let start = p + Vector3::new(50.0, 50.0, 50.0);
        let (a, _) = code_position_fix(&epoch(&p, &Vector3::zeros(), 0), &start, &nm).unwrap();
        let (b, _) = code_position_fix(&epoch(&p, &Vector3::zeros(), 3), &start, &nm).unwrap();
        assert!((a - b).norm() < 1e-6);
    }

    #[test]
    fn biased_row_is_excluded() {
        let p = Vector3::new(6.371e6, 2.0e3, -1.0e3);
        let v = Vector3::new(3.0, -12.0, 0.4);
        let nm = NoiseModel::default();
        let mut dd = epoch(&p, &v, 0);
        dd.measurements[2].code += 40.0;
        dd.measurements[4].doppler += 5.0;
        let (est, cov) = code_position_fix(&dd, &p, &nm).unwrap();
        assert!((est - p).norm() < 1e-6);
        assert!(cov.trace() < 10.0);
        let (vel, _) = doppler_velocity_fix(&dd, &est, &nm).unwrap();
        assert!((vel - v).norm() < 1e-6);
    }

    #[test]
    fn consistent_rows_are_kept() {
        let p = Vector3::new(6.371e6, 2.0e3, -1.0e3);
        let nm = NoiseModel::default();
        let mut dd = epoch(&p, &Vector3::zeros(), 0);
        for (k, m) in dd.measurements.iter_mut().enumerate() {
            m.code += 0.2 * (k as f64 - 2.5);
        }
        let rows: Vec<Row> = dd.measurements.iter().map(|_| (Vector3::x(), 1.0, 0.1)).collect();
        assert_eq!(fault(&rows, &Matrix3::identity()), None);
        assert!(code_position_fix(&dd, &p, &nm).is_ok());
    }
}
