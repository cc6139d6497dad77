//! Dense two-phase simplex for the small LPs of the selection step.
//!
//! Bland's rule throughout, so degenerate vertices cannot cycle. Rows are
//! scaled to unit max-norm and the objective to unit max-norm before
//! pivoting; the problem sizes here are a few dozen variables.

use crate::error::{NavError, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Ge,
    Le,
    Eq,
}

impl Sense {
    fn flipped(self) -> Sense {
        match self {
            Sense::Ge => Sense::Le,
            Sense::Le => Sense::Ge,
            Sense::Eq => Sense::Eq,
        }
    }
}

/// `min cᵀx  s.t.  rows[r]·x (sense[r]) rhs[r],  lower <= x <= upper`.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub senses: Vec<Sense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        LinearProgram { objective, lower, upper, ..Default::default() }
    }

    pub fn add_row(&mut self, coefficients: Vec<f64>, sense: Sense, rhs: f64) {
        self.rows.push(coefficients);
        self.senses.push(sense);
        self.rhs.push(rhs);
    }

    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(NavError::Dimension(format!("LP with {n} variables has mismatched bounds")));
        }
        if self.rows.iter().any(|r| r.len() != n)
            || self.senses.len() != self.rows.len()
            || self.rhs.len() != self.rows.len()
        {
            return Err(NavError::Dimension("LP constraint rows do not match variable count".into()));
        }
        let finite = self
            .objective
            .iter()
            .chain(self.rhs.iter())
            .chain(self.lower.iter())
            .chain(self.rows.iter().flatten())
            .all(|v| v.is_finite());
        if !finite || self.upper.iter().any(|u| u.is_nan()) {
            return Err(NavError::NonFinite("linear program"));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l > u) {
            return Err(NavError::invalid("LP variable with lower bound above upper bound"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Every nonbasic reduced cost is strictly positive, so no other optimum exists.
    pub unique: bool,
}

struct Tableau {
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
    art_start: usize,
    rc: Vec<f64>,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.ncols
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let p = self.a[r][e];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[r].clone();
        for (k, row) in self.a.iter_mut().enumerate() {
            if k == r {
                continue;
            }
            let f = row[e];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[e] = 0.0;
            }
        }
        let f = self.rc[e];
        if f != 0.0 {
            for (v, pv) in self.rc.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.rc[e] = 0.0;
        }
        self.basis[r] = e;
    }

    fn price(&mut self, cost: &[f64]) {
        let mut rc = cost.to_vec();
        rc.push(0.0);
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (v, a) in rc.iter_mut().zip(&self.a[r]) {
                    *v -= cb * a;
                }
            }
        }
        self.rc = rc;
    }

    fn run(&mut self, cost: &[f64], allow_artificial: bool) -> Result<()> {
        self.price(cost);
        let limit = 200 * (self.a.len() + self.ncols + 1);
        for _ in 0..limit {
            let cols = if allow_artificial { self.ncols } else { self.art_start };
            let Some(e) = (0..cols).find(|&j| self.rc[j] < -COST_TOL) else {
                return Ok(());
            };
            let rhs = self.rhs();
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.a.len() {
                let coef = self.a[r][e];
                if coef <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.a[r][rhs].max(0.0) / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((br, bratio)) => {
                        if ratio < bratio - 1e-14 || ((ratio - bratio).abs() <= 1e-14 && self.basis[r] < self.basis[br])
                        {
                            Some((r, ratio))
                        } else {
                            Some((br, bratio))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Err(NavError::Internal("linear program is unbounded".into()));
            };
            self.pivot(r, e);
        }
        Err(NavError::Internal("simplex iteration limit reached".into()))
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.objective.len();
    let active: Vec<usize> = (0..n).filter(|&i| lp.upper[i] > lp.lower[i]).collect();
    let na = active.len();

    // Rows over the shifted active variables y = x - lower, normalised.
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for ((coef, &sense), &rhs) in lp.rows.iter().zip(&lp.senses).zip(&lp.rhs) {
        let shift: f64 = coef.iter().zip(&lp.lower).map(|(a, l)| a * l).sum();
        let mut a: Vec<f64> = active.iter().map(|&i| coef[i]).collect();
        let mut b = rhs - shift;
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            let ok = match sense {
                Sense::Ge => b <= FEAS_TOL,
                Sense::Le => b >= -FEAS_TOL,
                Sense::Eq => b.abs() <= FEAS_TOL,
            };
            if !ok {
                return Err(NavError::Internal("linear program is infeasible".into()));
            }
            continue;
        }
        a.iter_mut().for_each(|v| *v /= scale);
        b /= scale;
        rows.push((a, sense, b));
    }
    for (k, &i) in active.iter().enumerate() {
        let width = lp.upper[i] - lp.lower[i];
        if width.is_finite() {
            let mut a = vec![0.0; na];
            a[k] = 1.0;
            rows.push((a, Sense::Le, width));
        }
    }
    for (a, sense, b) in rows.iter_mut() {
        if *b < 0.0 {
            a.iter_mut().for_each(|v| *v = -*v);
            *b = -*b;
            *sense = sense.flipped();
        }
    }

    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let art_start = na + n_slack;
    let ncols = art_start + n_art;
    let mut a = Vec::with_capacity(rows.len());
    let mut basis = Vec::with_capacity(rows.len());
    let (mut slack, mut art) = (na, art_start);
    for (coef, sense, b) in &rows {
        let mut row = vec![0.0; ncols + 1];
        row[..na].copy_from_slice(coef);
        row[ncols] = *b;
        match sense {
            Sense::Le => {
                row[slack] = 1.0;
                basis.push(slack);
                slack += 1;
            }
            Sense::Ge => {
                row[slack] = -1.0;
                slack += 1;
                row[art] = 1.0;
                basis.push(art);
                art += 1;
            }
            Sense::Eq => {
                row[art] = 1.0;
                basis.push(art);
                art += 1;
            }
        }
        a.push(row);
    }
    let mut t = Tableau { a, basis, ncols, art_start, rc: Vec::new() };

    if n_art > 0 {
        let mut cost = vec![0.0; ncols];
        cost[art_start..].iter_mut().for_each(|c| *c = 1.0);
        t.run(&cost, true)?;
        let infeasibility = -t.rc[ncols];
        if infeasibility > FEAS_TOL {
            return Err(NavError::Internal(format!(
                "linear program is infeasible (phase-one residual {infeasibility:.3e})"
            )));
        }
        let mut r = 0;
        while r < t.a.len() {
            if t.basis[r] >= art_start {
                match (0..art_start).find(|&j| t.a[r][j].abs() > PIVOT_TOL) {
                    Some(j) => t.pivot(r, j),
                    None => {
                        t.a.remove(r);
                        t.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let cscale = active.iter().fold(0.0f64, |m, &i| m.max(lp.objective[i].abs()));
    let cscale = if cscale > 0.0 { cscale } else { 1.0 };
    let mut cost = vec![0.0; ncols];
    for (k, &i) in active.iter().enumerate() {
        cost[k] = lp.objective[i] / cscale;
    }
    t.run(&cost, false)?;

    let mut x = lp.lower.clone();
    for (r, &b) in t.basis.iter().enumerate() {
        if b < na {
            x[active[b]] += t.a[r][ncols].max(0.0);
        }
    }
    for &i in &active {
        x[i] = x[i].min(lp.upper[i]);
    }
    let mut is_basic = vec![false; ncols];
    t.basis.iter().for_each(|&b| is_basic[b] = true);
    let unique = (0..art_start).all(|j| is_basic[j] || t.rc[j] > COST_TOL);
    let objective = x.iter().zip(&lp.objective).map(|(x, c)| x * c).sum();
    Ok(LpSolution { x, objective, unique })
}
