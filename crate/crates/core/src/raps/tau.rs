use nalgebra::DVector;

use super::constraint::ConstraintSystem;
use super::lp::{solve_lp, LinearProgram, Sense};
use crate::error::{NavError, Result};

/// Slack implied by `tau`: `g_j (1 - tau)` on rows unreachable at `tau = 1`,
/// zero elsewhere. This is the smallest admissible slack for every row.
pub fn slack_for(cs: &ConstraintSystem, tau: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(cs.rows(), |j, _| {
        if cs.is_soft(j) {
            cs.g.row(j).iter().zip(tau.iter()).map(|(g, t)| g * (1.0 - t)).sum::<f64>().max(0.0)
        } else {
            0.0
        }
    })
}

/// Exact minimiser of `cᵀtau + gamma 1ᵀmu` over the selection block.
///
/// On soft rows the slack lower bound `g_j (1 - tau)` is always tight at the
/// optimum, so `mu` is eliminated and those rows fold into the cost as
/// `-gamma g_j`. The remaining rows are hard covering constraints. Ties are
/// broken towards the lexicographically smallest `tau`.
pub fn solve_tau_lp(c: &DVector<f64>, cs: &ConstraintSystem, gamma: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = cs.measurements();
    if c.len() != m {
        return Err(NavError::Dimension(format!("{} costs for {} measurements", c.len(), m)));
    }
    if c.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(NavError::invalid("selection costs must be finite and non-negative"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(NavError::invalid("gamma must be positive"));
    }
    let mut cost: Vec<f64> = c.iter().copied().collect();
    let mut hard = Vec::new();
    for j in 0..cs.rows() {
        if cs.is_soft(j) {
            for (ci, g) in cost.iter_mut().zip(cs.g.row(j).iter()) {
                *ci -= gamma * g;
            }
        } else if cs.is_hard(j) {
            hard.push(j);
        }
    }

    let tau = if hard.is_empty() {
        DVector::from_iterator(m, cost.iter().map(|&ci| if ci < 0.0 { 1.0 } else { 0.0 }))
    } else {
        let mut lp = LinearProgram::new(cost.clone(), vec![0.0; m], vec![1.0; m]);
        for &j in &hard {
            lp.add_row(cs.g.row(j).iter().copied().collect(), Sense::Ge, cs.d[j]);
        }
        let first = solve_lp(&lp)
            .map_err(|e| NavError::Internal(format!("selection LP failed although tau = 1 is feasible: {e}")))?;
        let x = if first.unique { first.x } else { lexicographic_min(lp, first.objective, first.x) };
        DVector::from_iterator(m, x.into_iter().map(|v| v.clamp(0.0, 1.0)))
    };
    let mu = slack_for(cs, &tau);
    Ok((tau, mu))
}

fn lexicographic_min(mut lp: LinearProgram, optimum: f64, mut x: Vec<f64>) -> Vec<f64> {
    let n = x.len();
    let tol = 1e-9 * lp.objective.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
    let cost = std::mem::replace(&mut lp.objective, vec![0.0; n]);
    lp.add_row(cost, Sense::Le, optimum + tol);
    for i in 0..n {
        if x[i] <= 1e-12 {
            lp.lower[i] = 0.0;
            lp.upper[i] = 0.0;
            x[i] = 0.0;
            continue;
        }
        lp.objective.iter_mut().for_each(|c| *c = 0.0);
        lp.objective[i] = 1.0;
        match solve_lp(&lp) {
            Ok(s) => {
                x = s.x;
                lp.lower[i] = x[i];
                lp.upper[i] = x[i];
            }
            Err(_) => break,
        }
    }
    x
}
