use nalgebra::{DMatrix, DVector, Vector3};

use super::epoch::LinearizedEpoch;
use super::float::weighted_float_solve;
use super::strategy::{flags, UpdateOutcome};
use crate::error::{NavError, Result};
use crate::frames::enu_to_ecef_at;
use crate::gnss::ROWS_PER_SAT;
use crate::raps::{solve_soft_raps, GaussianPrior, PerformanceSpec, RapsOptions};

/// `blockdiag(C_en, C_en, I)`: maps a local-frame error state (east, north,
/// up position and velocity) to the ECEF error state.
pub fn local_frame_transform(position: &Vector3<f64>, n: usize) -> DMatrix<f64> {
    let c = enu_to_ecef_at(position);
    let mut t = DMatrix::identity(n, n);
    t.view_mut((0, 0), (3, 3)).copy_from(&c);
    t.view_mut((3, 3), (3, 3)).copy_from(&c);
    t
}

/// Two-step selection. Step 1 solves the soft-constrained selection on the
/// code and Doppler rows alone, over the navigation states in the local
/// frame; its state estimate is discarded. Step 2 reuses the code weights on
/// the phase rows and solves the weighted float MAP over the augmented state.
pub fn raps_rtk_update(
    prior_cov: &DMatrix<f64>,
    epoch: &LinearizedEpoch,
    spec: &PerformanceSpec,
    opts: &RapsOptions,
    use_phase: bool,
) -> Result<UpdateOutcome> {
    epoch.validate()?;
    let n = epoch.nav_dim;
    let m = epoch.m();
    if m == 0 {
        let sol = weighted_float_solve(prior_cov, epoch, &DVector::zeros(0))?;
        return Ok(UpdateOutcome::from_float(prior_cov, epoch, sol, DVector::zeros(0)));
    }
    let rows: Vec<usize> = (0..m).flat_map(|s| [ROWS_PER_SAT * s, ROWS_PER_SAT * s + 1]).collect();
    if rows.len() != 2 * m {
        return Err(NavError::Internal("selection subsystem must hold exactly the code and Doppler rows".into()));
    }
    let t = local_frame_transform(&epoch.position, n);
    let h1 = DMatrix::from_fn(2 * m, n, |r, c| epoch.h[(rows[r], c)]) * &t;
    let dz1 = DVector::from_fn(2 * m, |r, _| epoch.dz[rows[r]]);
    let var1 = DVector::from_fn(2 * m, |r, _| epoch.var[rows[r]]);
    let prior_local = GaussianPrior::from_covariance(t.transpose() * prior_cov * &t)?;
    let sel = solve_soft_raps(&prior_local, &dz1, &h1, &var1, spec, opts)?;

    let mut tau = DVector::zeros(epoch.rows());
    for s in 0..m {
        let code = sel.tau[2 * s];
        tau[ROWS_PER_SAT * s] = code;
        tau[ROWS_PER_SAT * s + 1] = sel.tau[2 * s + 1];
        tau[ROWS_PER_SAT * s + 2] = if use_phase { code } else { 0.0 };
    }
    let sol = weighted_float_solve(prior_cov, epoch, &tau)?;
    let mut out = UpdateOutcome::from_float(prior_cov, epoch, sol, tau);
    out.slack = sel.mu;
    out.risk = sel.objective;
    out.feasible = sel.feasible;
    out.iterations = sel.iterations;
    if !sel.feasible {
        out.flags |= flags::INFEASIBLE;
    }
    if !sel.converged {
        out.flags |= flags::NOT_CONVERGED;
    }
    Ok(out)
}
