use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::epoch::LinearizedEpoch;
use super::float::weighted_float_solve;
use super::strategy::{flags, UpdateOutcome};
use crate::error::{NavError, Result};
use crate::gnss::{RowKind, ROWS_PER_SAT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TdConfig {
    /// Gate on the standardized innovation magnitude.
    pub lambda: f64,
    /// Re-test the survivors against their own solution until nothing new is
    /// excluded; off gates once against the prior.
    pub iterative: bool,
    pub max_iterations: usize,
}

impl Default for TdConfig {
    fn default() -> Self {
        TdConfig { lambda: 2.0, iterative: true, max_iterations: 10 }
    }
}

/// Threshold decision: code and Doppler rows whose standardized innovation
/// exceeds `lambda` are excluded, and a code exclusion takes the satellite's
/// phase row with it.
pub fn td_update(prior_cov: &DMatrix<f64>, epoch: &LinearizedEpoch, cfg: &TdConfig) -> Result<UpdateOutcome> {
    if !(cfg.lambda > 0.0) {
        return Err(NavError::invalid("TD decision parameter must be positive"));
    }
    epoch.validate()?;
    let n = epoch.nav_dim;
    let rows = epoch.rows();
    // Innovation variance from the navigation prior; code and Doppler rows
    // carry no ambiguity term.
    let hn = epoch.h.columns(0, n);
    let s = DVector::from_fn(rows, |i, _| {
        let hi = hn.row(i);
        (hi * prior_cov * hi.transpose())[0] + epoch.var[i]
    });

    let mut tau = DVector::from_element(rows, 1.0);
    let mut innovation = epoch.dz.clone();
    let mut gate_flags = 0;
    let passes = if cfg.iterative { cfg.max_iterations.max(1) } else { 1 };
    let mut sol = None;
    for pass in 0..passes {
        let mut changed = false;
        for i in 0..rows {
            let kind = epoch.row_kind(i);
            if kind == RowKind::Phase || tau[i] == 0.0 {
                continue;
            }
            if innovation[i].abs() / s[i].sqrt() > cfg.lambda {
                tau[i] = 0.0;
                if kind == RowKind::Code {
                    tau[i - (i % ROWS_PER_SAT) + 2] = 0.0;
                }
                changed = true;
            }
        }
        let current = weighted_float_solve(prior_cov, epoch, &tau)?;
        if !changed || !cfg.iterative {
            sol = Some(current);
            break;
        }
        let mut chi = DVector::zeros(n + epoch.m());
        chi.rows_mut(0, n).copy_from(&current.dx);
        chi.rows_mut(n, epoch.m()).copy_from(&current.ambiguities);
        innovation = &epoch.dz - &epoch.h * chi;
        if pass + 1 == passes {
            gate_flags |= flags::GATE_CAP;
            sol = Some(current);
        }
    }
    let sol = sol.expect("at least one gating pass");
    let mut out = UpdateOutcome::from_float(prior_cov, epoch, sol, tau);
    out.flags |= gate_flags;
    Ok(out)
}
