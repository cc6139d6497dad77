use nalgebra::{DMatrix, DVector};

use super::bcd::RapsOptions;
use super::constraint::build_g_d;
use super::risk::{risk_with_information, wls_with_information, GaussianPrior};
use super::spec::PerformanceSpec;
use super::tau::slack_for;
use crate::error::{NavError, Result};

pub const MAX_BINARY_MEASUREMENTS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct BinarySolution {
    pub b: DVector<f64>,
    pub dx: DVector<f64>,
    pub mu: DVector<f64>,
    pub objective: f64,
}

/// Exhaustive search over binary selections, each solved exactly for `dx`
/// and the minimal slack. Only meant as a reference for small problems.
pub fn brute_force_binary(
    prior: &GaussianPrior,
    dz: &DVector<f64>,
    h: &DMatrix<f64>,
    var: &DVector<f64>,
    spec: &PerformanceSpec,
    opts: &RapsOptions,
) -> Result<BinarySolution> {
    let gamma = opts.gamma;
    let m = h.nrows();
    if m > MAX_BINARY_MEASUREMENTS {
        return Err(NavError::invalid(format!(
            "binary enumeration limited to {MAX_BINARY_MEASUREMENTS} measurements, got {m}"
        )));
    }
    if dz.len() != m || h.ncols() != prior.dim() {
        return Err(NavError::Dimension(format!("H {}x{}, dz {}", m, h.ncols(), dz.len())));
    }
    let j_prior = &prior.information;
    let cs = build_g_d(h, var, &opts.prior_diagonal.of(prior), spec)?;
    let hard: Vec<usize> = (0..cs.rows()).filter(|&j| cs.is_hard(j)).collect();
    let mut best: Option<BinarySolution> = None;
    for mask in 0u32..(1u32 << m) {
        let b = DVector::from_fn(m, |i, _| f64::from((mask >> i) & 1));
        let covered =
            hard.iter().all(|&j| cs.g.row(j).iter().zip(b.iter()).map(|(g, t)| g * t).sum::<f64>() >= cs.d[j]);
        if !covered {
            continue;
        }
        let dx = wls_with_information(&b, dz, h, j_prior, var)?;
        let mu = slack_for(&cs, &b);
        let objective = risk_with_information(&dx, &b, dz, h, j_prior, var) + gamma * mu.sum();
        if best.as_ref().is_none_or(|s| objective < s.objective) {
            best = Some(BinarySolution { b, dx, mu, objective });
        }
    }
    best.ok_or_else(|| NavError::Internal("no binary selection satisfies the hard constraints".into()))
}
