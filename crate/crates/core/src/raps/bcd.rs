use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::constraint::{build_g_d, ConstraintSystem};
use super::risk::{
    posterior_information, risk_with_information, weighted_sq_residuals, wls_with_information, GaussianPrior,
};
use super::spec::PerformanceSpec;
use super::tau::{slack_for, solve_tau_lp};
use crate::error::{NavError, Result};

/// Which prior quantity the information bound is measured against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorDiagonal {
    /// `diag(J⁻)` of the full prior information matrix. This is the
    /// information on each state conditional on all the others, which in an
    /// INS filter far exceeds what the position estimate actually carries.
    Information,
    /// `1 / diag(P⁻)`: the marginal information of each state.
    #[default]
    Marginal,
}

impl PriorDiagonal {
    pub fn of(self, prior: &GaussianPrior) -> DVector<f64> {
        match self {
            PriorDiagonal::Information => prior.information.diagonal(),
            PriorDiagonal::Marginal => prior.covariance.diagonal().map(|p| 1.0 / p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RapsOptions {
    pub gamma: f64,
    pub max_iterations: usize,
    /// Stop once the objective decreases by less than this fraction.
    pub rel_tol: f64,
    pub prior_diagonal: PriorDiagonal,
}

impl Default for RapsOptions {
    fn default() -> Self {
        RapsOptions { gamma: 50.0, max_iterations: 50, rel_tol: 1e-6, prior_diagonal: PriorDiagonal::Marginal }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RapsSolution {
    pub dx: DVector<f64>,
    pub tau: DVector<f64>,
    pub mu: DVector<f64>,
    /// Risk term alone.
    pub risk: f64,
    /// Risk plus `gamma * sum(mu)`.
    pub objective: f64,
    /// Diagonal of the posterior information.
    pub info_diag: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each iteration, starting with `tau = 1`.
    pub objective_trace: Vec<f64>,
    /// The spec is reachable with every measurement enabled.
    pub feasible: bool,
    pub constraints: ConstraintSystem,
}

/// Block-coordinate descent on the soft-constrained selection problem,
/// starting from `tau = 1`.
pub fn solve_soft_raps(
    prior: &GaussianPrior,
    dz: &DVector<f64>,
    h: &DMatrix<f64>,
    var: &DVector<f64>,
    spec: &PerformanceSpec,
    opts: &RapsOptions,
) -> Result<RapsSolution> {
    let n = prior.dim();
    let m = h.nrows();
    if h.ncols() != n || dz.len() != m {
        return Err(NavError::Dimension(format!("H {}x{}, dz {}, prior {}", m, h.ncols(), dz.len(), n)));
    }
    if !(opts.gamma > 0.0 && opts.gamma.is_finite()) {
        return Err(NavError::invalid("gamma must be positive"));
    }
    if !dz.iter().chain(h.iter()).all(|v| v.is_finite()) {
        return Err(NavError::NonFinite("selection inputs"));
    }
    let j_prior = &prior.information;
    let prior_diag = opts.prior_diagonal.of(prior);
    let cs = build_g_d(h, var, &prior_diag, spec)?;

    let evaluate = |dx: &DVector<f64>, tau: &DVector<f64>, mu: &DVector<f64>| {
        let risk = risk_with_information(dx, tau, dz, h, j_prior, var);
        (risk, risk + opts.gamma * mu.sum())
    };

    let mut tau = DVector::from_element(m, 1.0);
    let mut mu = slack_for(&cs, &tau);
    let mut dx = wls_with_information(&tau, dz, h, j_prior, var)?;
    let (mut risk, mut objective) = evaluate(&dx, &tau, &mu);
    let mut trace = vec![objective];
    let mut converged = m == 0;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let c = weighted_sq_residuals(&dx, dz, h, var);
        let (tau_new, mu_new) = solve_tau_lp(&c, &cs, opts.gamma)?;
        let dx_new = wls_with_information(&tau_new, dz, h, j_prior, var)?;
        let (risk_new, obj_new) = evaluate(&dx_new, &tau_new, &mu_new);
        let slack = 1e-12 * objective.abs().max(1.0);
        if obj_new > objective + slack {
            // Only reachable through round-off; keep the better iterate.
            converged = true;
            break;
        }
        let decrease = (objective - obj_new) / objective.abs().max(f64::MIN_POSITIVE);
        tau = tau_new;
        mu = mu_new;
        dx = dx_new;
        risk = risk_new;
        objective = obj_new;
        trace.push(objective);
        converged = decrease < opts.rel_tol;
    }

    let info_diag = &prior_diag + (posterior_information(h, &tau, var, j_prior)?.diagonal() - j_prior.diagonal());
    Ok(RapsSolution {
        dx,
        tau,
        mu,
        risk,
        objective,
        info_diag,
        iterations,
        converged,
        objective_trace: trace,
        feasible: cs.feasible(),
        constraints: cs,
    })
}
