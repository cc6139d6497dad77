//! Error statistics in the local ENU frame of the truth, threshold rates, a
//! results table, NEES consistency and a paired significance test.

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{NavError, Result};
use crate::filter::EpochRecord;
use crate::frames::enu_to_ecef_at;
use crate::sim::TruthRecord;

/// Largest estimate-to-truth time offset accepted when matching (s).
pub const MATCH_TOLERANCE: f64 = 0.010;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub method: String,
    pub t: Vec<f64>,
    pub horizontal: Vec<f64>,
    pub vertical: Vec<f64>,
    pub three_d: Vec<f64>,
    /// Estimates with no truth within [`MATCH_TOLERANCE`].
    pub unmatched: usize,
}

impl ErrorSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn nearest(truth: &[TruthRecord], t: f64) -> Option<&TruthRecord> {
    let i = truth.partition_point(|r| r.t < t);
    let before = i.checked_sub(1).map(|j| &truth[j]);
    let after = truth.get(i);
    let best = match (before, after) {
        (Some(a), Some(b)) => Some(if (a.t - t).abs() <= (b.t - t).abs() { a } else { b }),
        (a, b) => a.or(b),
    };
    best.filter(|r| (r.t - t).abs() <= MATCH_TOLERANCE)
}

/// ENU error of `estimate` at the truth position.
pub fn enu_error(estimate: &Vector3<f64>, truth: &Vector3<f64>) -> Vector3<f64> {
    enu_to_ecef_at(truth).transpose() * (estimate - truth)
}

/// Truth must be sorted by time.
pub fn compute_errors(method: &str, estimates: &[(f64, Vector3<f64>)], truth: &[TruthRecord]) -> ErrorSeries {
    let mut s = ErrorSeries { method: method.to_string(), ..Default::default() };
    for (t, p) in estimates {
        let Some(tr) = nearest(truth, *t) else {
            s.unmatched += 1;
            continue;
        };
        let e = enu_error(p, &tr.position);
        s.t.push(*t);
        s.horizontal.push(e.xy().norm());
        s.vertical.push(e.z.abs());
        s.three_d.push(e.norm());
    }
    s
}

pub fn record_errors(records: &[EpochRecord], truth: &[TruthRecord]) -> ErrorSeries {
    let method = records.first().map(|r| r.method.as_str()).unwrap_or("");
    let est: Vec<_> = records.iter().map(|r| (r.t, r.position)).collect();
    compute_errors(method, &est, truth)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub horizontal: Vec<f64>,
    pub vertical: Vec<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { horizontal: vec![1.0, 1.5], vertical: vec![3.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub mean: f64,
    pub rms: f64,
    pub max: f64,
    /// `(threshold, percent of epochs at or below it)`.
    pub within: Vec<(f64, f64)>,
}

pub fn axis_stats(values: &[f64], thresholds: &[f64]) -> Result<AxisStats> {
    if values.is_empty() {
        return Err(NavError::invalid("cannot summarize an empty error series"));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(NavError::invalid("errors must be finite and non-negative"));
    }
    let n = values.len() as f64;
    let within =
        thresholds.iter().map(|&th| (th, 100.0 * values.iter().filter(|v| **v <= th).count() as f64 / n)).collect();
    Ok(AxisStats {
        mean: values.iter().sum::<f64>() / n,
        rms: (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
        max: values.iter().copied().fold(0.0, f64::max),
        within,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub epochs: usize,
    pub unmatched: usize,
    pub horizontal: AxisStats,
    pub vertical: AxisStats,
}

pub fn summarize(series: &ErrorSeries, th: &Thresholds) -> Result<Summary> {
    Ok(Summary {
        method: series.method.clone(),
        epochs: series.len(),
        unmatched: series.unmatched,
        horizontal: axis_stats(&series.horizontal, &th.horizontal)?,
        vertical: axis_stats(&series.vertical, &th.vertical)?,
    })
}

fn round_to(x: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (x * s).round() / s
}

impl AxisStats {
    pub fn rounded(&self, digits: i32) -> AxisStats {
        AxisStats {
            mean: round_to(self.mean, digits),
            rms: round_to(self.rms, digits),
            max: round_to(self.max, digits),
            within: self.within.iter().map(|(t, p)| (*t, round_to(*p, digits))).collect(),
        }
    }
}

impl Summary {
    /// Values as printed in tables; JSON output uses the same rounding.
    pub fn rounded(&self, digits: i32) -> Summary {
        Summary { horizontal: self.horizontal.rounded(digits), vertical: self.vertical.rounded(digits), ..self.clone() }
    }
}

/// Plain-text table: method, then horizontal mean/RMS/max/threshold rates,
/// then vertical. Numbers are printed with `digits` decimals.
pub fn format_table(rows: &[Summary], digits: usize) -> String {
    let Some(first) = rows.first() else {
        return String::new();
    };
    let mut header = vec!["Method".to_string()];
    for (axis, stats) in [("H", &first.horizontal), ("V", &first.vertical)] {
        for c in ["Mean", "RMS", "Max"] {
            header.push(format!("{axis} {c} (m)"));
        }
        for (th, _) in &stats.within {
            header.push(format!("{axis} <={th}m (%)"));
        }
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.method.clone()];
            for s in [&r.horizontal, &r.vertical] {
                for v in [s.mean, s.rms, s.max].into_iter().chain(s.within.iter().map(|w| w.1)) {
                    cells.push(format!("{v:.digits$}"));
                }
            }
            cells
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|row| row.get(c).map_or(0, |s| s.len())).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header, &mut out);
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    for row in &body {
        line(row, &mut out);
    }
    out
}

/// Two-sided chi-square acceptance band.
pub fn chi2_band(dof: usize, confidence: f64) -> Result<(f64, f64)> {
    let d = ChiSquared::new(dof as f64).map_err(|e| NavError::invalid(e.to_string()))?;
    let a = 0.5 * (1.0 - confidence);
    Ok((d.inverse_cdf(a), d.inverse_cdf(1.0 - a)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeesReport {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    /// Epochs without truth or with a singular covariance.
    pub skipped: usize,
    pub band: (f64, f64),
    pub in_band_fraction: f64,
}

/// Position NEES per epoch against the 95% chi-square(3) band.
pub fn nees(records: &[EpochRecord], truth: &[TruthRecord]) -> Result<NeesReport> {
    let band = chi2_band(3, 0.95)?;
    let mut r = NeesReport { t: Vec::new(), values: Vec::new(), skipped: 0, band, in_band_fraction: 0.0 };
    for rec in records {
        let (Some(tr), Some(chol)) = (nearest(truth, rec.t), rec.position_covariance.cholesky()) else {
            r.skipped += 1;
            continue;
        };
        let e = rec.position - tr.position;
        r.t.push(rec.t);
        r.values.push(e.dot(&chol.solve(&e)));
    }
    if r.values.is_empty() {
        return Err(NavError::invalid("no epochs available for NEES"));
    }
    let inside = r.values.iter().filter(|v| **v >= band.0 && **v <= band.1).count();
    r.in_band_fraction = inside as f64 / r.values.len() as f64;
    Ok(r)
}

/// One-sided paired t-test of `mean(a - b) < 0`. Returns `(t, p)`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(NavError::invalid("paired test needs two equal-length samples of size >= 2"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean < 0.0 { (f64::NEG_INFINITY, 0.0) } else { (f64::INFINITY, 1.0) });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| NavError::Internal(e.to_string()))?;
    Ok((t, dist.cdf(t)))
}

/// Empirical CDF as `(value, fraction <= value)`, one point per sample.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().map(|(i, x)| (*x, (i + 1) as f64 / n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{enu_to_ecef, geodetic_to_ecef};
    use nalgebra::{Matrix3, UnitQuaternion};

    fn truth_at(t: f64, p: Vector3<f64>) -> TruthRecord {
        TruthRecord {
            t,
            position: p,
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
        }
    }

    #[test]
    fn enu_errors_at_truth() {
        let (lat, lon) = (0.7, 0.3);
        let p = geodetic_to_ecef(lat, lon, 10.0);
        let c = enu_to_ecef(lat, lon);
        let truth = vec![truth_at(0.0, p), truth_at(1.0, p), truth_at(2.0, p)];
        let est = vec![
            (0.0, p),
            (1.004, p + c * Vector3::new(0.0, 0.0, 3.0)),
            (2.0, p + c * Vector3::new(1.0, 1.0, 0.0)),
            (5.0, p),
        ];
        let s = compute_errors("x", &est, &truth);
        assert_eq!(s.unmatched, 1);
        assert_eq!(s.horizontal[0], 0.0);
        assert!(s.horizontal[1] < 1e-9 && (s.vertical[1] - 3.0).abs() < 1e-9);
        assert!((s.horizontal[2] - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn summary_of_a_small_series() {
        let a = axis_stats(&[1.0, 3.0], &[1.5]).unwrap();
        assert_eq!(a.mean, 2.0);
        assert!((a.rms - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(a.max, 3.0);
        assert_eq!(a.within, vec![(1.5, 50.0)]);
        let z = axis_stats(&[0.0; 4], &[0.5, 1.0]).unwrap();
        assert!(z.within.iter().all(|w| w.1 == 100.0));
        assert!(axis_stats(&[], &[1.0]).is_err());
    }

    #[test]
    fn nees_examples() {
        let truth = vec![truth_at(0.0, Vector3::zeros()), truth_at(1.0, Vector3::zeros())];
        let rec = |t: f64, e: Vector3<f64>, p: Matrix3<f64>| EpochRecord {
            t,
            method: "m".into(),
            position: e,
            velocity: Vector3::zeros(),
            position_covariance: p,
            flags: 0,
            m_used: 0,
            m_total: 0,
            risk: 0.0,
            feasible: true,
            iterations: 0,
            tau: vec![],
            mu: vec![],
            info_diag: vec![],
        };
        let recs = vec![
            rec(0.0, Vector3::zeros(), Matrix3::identity()),
            rec(1.0, Vector3::new(1.0, 1.0, 1.0), Matrix3::identity()),
            rec(1.0, Vector3::zeros(), Matrix3::zeros()),
        ];
        let r = nees(&recs, &truth).unwrap();
        assert_eq!(r.values, vec![0.0, 3.0]);
        assert_eq!(r.skipped, 1);
        assert!((r.band.0 - 0.2158).abs() < 1e-4 && (r.band.1 - 9.3484).abs() < 1e-4);
        assert_eq!(r.in_band_fraction, 0.5);
    }

    #[test]
    fn paired_test_detects_a_consistent_gap() {
        let a: Vec<f64> = (0..20).map(|i| 1.0 + 0.01 * (i % 3) as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| 1.5 + 0.02 * (i % 5) as f64).collect();
        let (t, p) = paired_t_test(&a, &b).unwrap();
        assert!(t < 0.0 && p < 1e-6);
        let (_, p) = paired_t_test(&b, &a).unwrap();
        assert!(p > 0.99);
    }

    #[test]
    fn table_has_one_row_per_method() {
        let s = summarize(
            &ErrorSeries {
                method: "EKF".into(),
                t: vec![0.0],
                horizontal: vec![0.5],
                vertical: vec![1.0],
                three_d: vec![1.1],
                unmatched: 0,
            },
            &Thresholds::default(),
        )
        .unwrap();
        let table = format_table(&[s.clone(), Summary { method: "RAPS-INS-RTK".into(), ..s }], 2);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("Method"));
        assert!(lines[3].starts_with("RAPS-INS-RTK"));
        assert!(lines[2].contains("0.50") && lines[2].contains("100.00"));
    }

    #[test]
    fn cdf_ends_at_one() {
        let c = empirical_cdf(&[3.0, 1.0, 2.0]);
        assert_eq!(c.first().unwrap().0, 1.0);
        assert_eq!(c.last().unwrap().1, 1.0);
    }
}
