use nalgebra::{DMatrix, DVector};

use super::epoch::LinearizedEpoch;
use super::strategy::{flags, UpdateOutcome};
use crate::error::{NavError, Result};
use crate::gnss::ROWS_PER_SAT;
use crate::linalg::{spd_inverse, symmetrize};

// Ambiguity information below this is treated as absent.
const AMBIGUITY_INFO_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct FloatSolution {
    pub dx: DVector<f64>,
    /// Float DD ambiguities (cycles); zero where the ambiguity was not estimated.
    pub ambiguities: DVector<f64>,
    pub estimated: Vec<bool>,
    /// Navigation covariance after marginalising the ambiguities.
    pub covariance: DMatrix<f64>,
    pub flags: u32,
}

/// Covariance of the first `nav_dim` states from a full information matrix.
/// Ambiguities without information are dropped before the Schur complement.
pub fn marginalize_ambiguities(info: &DMatrix<f64>, nav_dim: usize) -> Result<DMatrix<f64>> {
    let n = info.nrows();
    if info.ncols() != n || nav_dim > n {
        return Err(NavError::Dimension(format!("information {}x{} with nav block {nav_dim}", n, info.ncols())));
    }
    let keep: Vec<usize> = (nav_dim..n).filter(|&k| info[(k, k)] > AMBIGUITY_INFO_FLOOR).collect();
    let jnn = info.view((0, 0), (nav_dim, nav_dim)).into_owned();
    if keep.is_empty() {
        return spd_inverse(&jnn, "navigation information");
    }
    let jna = DMatrix::from_fn(nav_dim, keep.len(), |i, k| info[(i, keep[k])]);
    let jaa = DMatrix::from_fn(keep.len(), keep.len(), |a, b| info[(keep[a], keep[b])]);
    let jaa_inv = spd_inverse(&jaa, "ambiguity information")?;
    let schur = symmetrize(&(jnn - &jna * jaa_inv * jna.transpose()));
    spd_inverse(&schur, "reduced navigation information")
}

/// MAP solution with per-row weights `tau` (noise scaled by `1/tau`).
///
/// Rows with zero weight are removed rather than divided, and ambiguity
/// columns left without a phase row are dropped. A singular reduced system
/// returns the prior with [`flags::SINGULAR`].
pub fn weighted_float_solve(
    prior_cov: &DMatrix<f64>,
    epoch: &LinearizedEpoch,
    tau: &DVector<f64>,
) -> Result<FloatSolution> {
    epoch.validate()?;
    let n = epoch.nav_dim;
    let m = epoch.m();
    if prior_cov.shape() != (n, n) || tau.len() != epoch.rows() {
        return Err(NavError::Dimension(format!(
            "prior {:?} and {} weights for a {n}-state epoch with {} rows",
            prior_cov.shape(),
            tau.len(),
            epoch.rows()
        )));
    }
    if tau.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(NavError::invalid("measurement weights must lie in [0, 1]"));
    }
    let j_prior = spd_inverse(prior_cov, "prior covariance")?;
    let passthrough = |extra: u32| FloatSolution {
        dx: DVector::zeros(n),
        ambiguities: DVector::zeros(m),
        estimated: vec![false; m],
        covariance: prior_cov.clone(),
        flags: flags::PRIOR_PASSTHROUGH | extra,
    };
    let rows: Vec<usize> = (0..epoch.rows()).filter(|&i| tau[i] > 0.0).collect();
    if rows.is_empty() {
        return Ok(passthrough(if m == 0 { flags::EMPTY_EPOCH } else { flags::ALL_EXCLUDED }));
    }
    let estimated: Vec<bool> = (0..m).map(|s| tau[ROWS_PER_SAT * s + 2] > 0.0).collect();
    let amb: Vec<usize> = (0..m).filter(|&s| estimated[s]).collect();
    let cols: Vec<usize> = (0..n).chain(amb.iter().map(|s| n + s)).collect();
    let k = cols.len();

    let mut info = DMatrix::zeros(k, k);
    info.view_mut((0, 0), (n, n)).copy_from(&j_prior);
    let mut rhs = DVector::zeros(k);
    for &i in &rows {
        let w = tau[i] / epoch.var[i];
        let hi = DVector::from_iterator(k, cols.iter().map(|&c| epoch.h[(i, c)]));
        info.ger(w, &hi, &hi, 1.0);
        rhs.axpy(w * epoch.dz[i], &hi, 1.0);
    }

    let (jnn, jna, jaa) = (
        info.view((0, 0), (n, n)).into_owned(),
        info.view((0, n), (n, k - n)).into_owned(),
        info.view((n, n), (k - n, k - n)).into_owned(),
    );
    let (schur, reduced_rhs, jaa_inv) = if amb.is_empty() {
        (jnn, rhs.rows(0, n).into_owned(), DMatrix::zeros(0, 0))
    } else {
        let jaa_inv = match spd_inverse(&jaa, "ambiguity information") {
            Ok(v) => v,
            Err(_) => return Ok(passthrough(flags::SINGULAR)),
        };
        let g = &jna * &jaa_inv;
        (symmetrize(&(jnn - &g * jna.transpose())), rhs.rows(0, n) - &g * rhs.rows(n, k - n), jaa_inv)
    };
    let Some(chol) = schur.clone().cholesky() else {
        return Ok(passthrough(flags::SINGULAR));
    };
    let dx = chol.solve(&reduced_rhs);
    let covariance = symmetrize(&chol.inverse());
    let mut ambiguities = DVector::zeros(m);
    if !amb.is_empty() {
        let a = &jaa_inv * (rhs.rows(n, k - n) - jna.transpose() * &dx);
        for (idx, &s) in amb.iter().enumerate() {
            ambiguities[s] = a[idx];
        }
    }
    let mut f = 0;
    if amb.len() < m {
        f |= flags::DROPPED_AMBIGUITY;
    }
    Ok(FloatSolution { dx, ambiguities, estimated, covariance, flags: f })
}

/// Full-weight MAP update using every code, Doppler and phase row.
pub fn ekf_update(prior_cov: &DMatrix<f64>, epoch: &LinearizedEpoch) -> Result<UpdateOutcome> {
    let tau = DVector::from_element(epoch.rows(), 1.0);
    let sol = weighted_float_solve(prior_cov, epoch, &tau)?;
    Ok(UpdateOutcome::from_float(prior_cov, epoch, sol, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::is_psd;

    #[test]
    fn block_diagonal_information_marginalizes_to_nav_inverse() {
        let mut info = DMatrix::zeros(4, 4);
        info[(0, 0)] = 2.0;
        info[(1, 1)] = 4.0;
        info[(0, 1)] = 1.0;
        info[(1, 0)] = 1.0;
        info[(2, 2)] = 5.0;
        info[(3, 3)] = 7.0;
        let cov = marginalize_ambiguities(&info, 2).unwrap();
        let direct = info.view((0, 0), (2, 2)).into_owned().try_inverse().unwrap();
        assert!((cov - direct).amax() < 1e-12);
    }

    #[test]
    fn marginal_matches_dense_inverse() {
        let a = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + if i == j { 6.0 } else { 0.0 });
        let info = &a * a.transpose();
        let cov = marginalize_ambiguities(&info, 4).unwrap();
        let full = info.clone().try_inverse().unwrap();
        assert!((cov - full.view((0, 0), (4, 4))).amax() < 1e-9);
        let only_nav = marginalize_ambiguities(&info.view((0, 0), (4, 4)).into_owned(), 4).unwrap();
        assert!(is_psd(&only_nav, 1e-12));
    }

    #[test]
    fn information_free_ambiguity_is_dropped() {
        let mut info = DMatrix::identity(3, 3);
        info[(2, 2)] = 0.0;
        let cov = marginalize_ambiguities(&info, 2).unwrap();
        assert_eq!(cov, DMatrix::identity(2, 2));
    }
}
