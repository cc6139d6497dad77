use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::epoch::LinearizedEpoch;
use super::float::{ekf_update, FloatSolution};
use super::raps_rtk::{local_frame_transform, raps_rtk_update};
use super::td::{td_update, TdConfig};
use crate::error::Result;
use crate::gnss::ROWS_PER_SAT;
use crate::linalg::spd_solve;
use crate::raps::{tcheby_spec, PerformanceSpec, PriorDiagonal, RapsOptions};

/// Bit flags reported with every epoch.
pub mod flags {
    /// The prior was passed through unchanged.
    pub const PRIOR_PASSTHROUGH: u32 = 1;
    /// The normal equations were singular.
    pub const SINGULAR: u32 = 1 << 1;
    /// Every measurement was rejected.
    pub const ALL_EXCLUDED: u32 = 1 << 2;
    /// Fewer than two satellites in common, no update.
    pub const EMPTY_EPOCH: u32 = 1 << 3;
    /// The performance spec was unreachable and slack was used.
    pub const INFEASIBLE: u32 = 1 << 4;
    /// Selection stopped at the iteration cap.
    pub const NOT_CONVERGED: u32 = 1 << 5;
    /// At least one ambiguity had no phase row left.
    pub const DROPPED_AMBIGUITY: u32 = 1 << 6;
    /// Threshold gating hit its iteration cap.
    pub const GATE_CAP: u32 = 1 << 7;
    /// The attitude correction was too large and was skipped.
    pub const LARGE_CORRECTION: u32 = 1 << 8;
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub dx: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub ambiguities: DVector<f64>,
    /// One weight per row, `[code, doppler, phase]` per satellite.
    pub weights: DVector<f64>,
    pub slack: DVector<f64>,
    /// Prior Mahalanobis term plus weighted squared residuals after the update.
    pub risk: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub flags: u32,
    /// Posterior marginal information `1 / diag(P⁺)` on local-frame position
    /// and velocity.
    pub info_diag: DVector<f64>,
    pub m_total: usize,
    /// Satellites whose code row kept a nonzero weight.
    pub m_used: usize,
}

impl UpdateOutcome {
    pub(crate) fn from_float(
        prior_cov: &DMatrix<f64>,
        epoch: &LinearizedEpoch,
        sol: FloatSolution,
        weights: DVector<f64>,
    ) -> Self {
        let n = epoch.nav_dim;
        let m = epoch.m();
        let mut chi = DVector::zeros(n + m);
        chi.rows_mut(0, n).copy_from(&sol.dx);
        chi.rows_mut(n, m).copy_from(&sol.ambiguities);
        let r = &epoch.dz - &epoch.h * &chi;
        let prior_term = spd_solve(prior_cov, &sol.dx, "prior covariance").map(|v| v.dot(&sol.dx)).unwrap_or(f64::NAN);
        let risk = prior_term + (0..r.len()).map(|i| weights[i] * r[i] * r[i] / epoch.var[i]).sum::<f64>();
        let t = local_frame_transform(&epoch.position, n);
        let local = t.transpose() * &sol.covariance * &t;
        let info_diag = DVector::from_fn(6, |i, _| 1.0 / local[(i, i)]);
        let m_used = (0..m).filter(|&s| weights[ROWS_PER_SAT * s] > 0.0).count();
        UpdateOutcome {
            dx: sol.dx,
            covariance: sol.covariance,
            ambiguities: sol.ambiguities,
            weights,
            slack: DVector::zeros(0),
            risk,
            feasible: true,
            iterations: 0,
            flags: sol.flags,
            info_diag,
            m_total: m,
            m_used,
        }
    }
}

/// Settings shared by the measurement-update strategies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub gamma: f64,
    pub td_lambda: f64,
    pub td_iterative: bool,
    pub td_max_iterations: usize,
    pub spec: PerformanceSpec,
    pub raps_max_iterations: usize,
    pub raps_rel_tol: f64,
    pub raps_prior_diagonal: PriorDiagonal,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let raps = RapsOptions::default();
        let td = TdConfig::default();
        EstimatorConfig {
            gamma: raps.gamma,
            td_lambda: td.lambda,
            td_iterative: td.iterative,
            td_max_iterations: td.max_iterations,
            spec: tcheby_spec("lane-level-paper").expect("built-in preset"),
            raps_max_iterations: raps.max_iterations,
            raps_rel_tol: raps.rel_tol,
            raps_prior_diagonal: raps.prior_diagonal,
        }
    }
}

impl EstimatorConfig {
    pub fn raps_options(&self) -> RapsOptions {
        RapsOptions {
            gamma: self.gamma,
            max_iterations: self.raps_max_iterations,
            rel_tol: self.raps_rel_tol,
            prior_diagonal: self.raps_prior_diagonal,
        }
    }

    pub fn td_config(&self) -> TdConfig {
        TdConfig { lambda: self.td_lambda, iterative: self.td_iterative, max_iterations: self.td_max_iterations }
    }
}

/// A measurement-update strategy selectable by name.
pub trait MeasurementUpdate: Send + Sync {
    fn name(&self) -> &'static str;
    fn update(&self, prior_cov: &DMatrix<f64>, epoch: &LinearizedEpoch) -> Result<UpdateOutcome>;
}

#[derive(Clone, Debug, Default)]
pub struct EkfUpdate;

impl MeasurementUpdate for EkfUpdate {
    fn name(&self) -> &'static str {
        "ekf"
    }

    fn update(&self, prior_cov: &DMatrix<f64>, epoch: &LinearizedEpoch) -> Result<UpdateOutcome> {
        ekf_update(prior_cov, epoch)
    }
}

#[derive(Clone, Debug, Default)]
pub struct TdUpdate {
    pub config: TdConfig,
}

impl MeasurementUpdate for TdUpdate {
    fn name(&self) -> &'static str {
        "td"
    }

    fn update(&self, prior_cov: &DMatrix<f64>, epoch: &LinearizedEpoch) -> Result<UpdateOutcome> {
        td_update(prior_cov, epoch, &self.config)
    }
}

#[derive(Clone, Debug)]
pub struct RapsUpdate {
    pub spec: PerformanceSpec,
    pub options: RapsOptions,
    /// Carry the code weights over to the phase rows; off gives a code and
    /// Doppler only solution.
    pub use_phase: bool,
}

impl MeasurementUpdate for RapsUpdate {
    fn name(&self) -> &'static str {
        if self.use_phase {
            "raps-rtk"
        } else {
            "raps"
        }
    }

    fn update(&self, prior_cov: &DMatrix<f64>, epoch: &LinearizedEpoch) -> Result<UpdateOutcome> {
        raps_rtk_update(prior_cov, epoch, &self.spec, &self.options, self.use_phase)
    }
}
