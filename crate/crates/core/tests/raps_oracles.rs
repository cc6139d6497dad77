use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rapsnav::raps::{
    build_g_d, posterior_information, slack_for, solve_soft_raps, solve_tau_lp, ConstraintSystem, GaussianPrior,
    PerformanceSpec, RapsOptions,
};

struct Instance {
    prior: GaussianPrior,
    dz: DVector<f64>,
    h: DMatrix<f64>,
    var: DVector<f64>,
    spec: PerformanceSpec,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random problem; `spec_scale` sets bounds relative to the information
/// reachable with all measurements (values above 1 make rows infeasible).
fn instance(rng: &mut ChaCha8Rng, m: usize, n: usize, spec_scale: f64) -> Instance {
    let h = DMatrix::from_fn(m, n, |_, _| normal(rng));
    let var: DVector<f64> = DVector::from_fn(m, |_, _| rng.random_range(0.1..2.0));
    let a = DMatrix::from_fn(n, n, |_, _| normal(rng));
    let p = &a * a.transpose() * 0.5 + DMatrix::identity(n, n) * rng.random_range(0.5..3.0);
    let prior = GaussianPrior::from_covariance(p).unwrap();
    let dz = DVector::from_fn(m, |i, _| {
        let s = var[i].sqrt();
        if rng.random_bool(0.25) {
            s * rng.random_range(10.0..50.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
        } else {
            s * normal(rng)
        }
    });
    let base = RapsOptions::default().prior_diagonal.of(&prior);
    let nc = rng.random_range(1..=n);
    let components: Vec<usize> = (0..nc).collect();
    let bounds = components
        .iter()
        .map(|&k| {
            let reach: f64 = (0..m).map(|i| h[(i, k)].powi(2) / var[i]).sum();
            base[k] + rng.random_range(0.0..spec_scale) * reach
        })
        .collect();
    let spec = PerformanceSpec::custom(bounds, components).unwrap();
    Instance { prior, dz, h, var, spec }
}

/// Enumerates basic solutions of the (tau, mu) LP in its original form,
/// with slack bounded by `L_j` on reachable rows and `g_j 1` otherwise, and returns the best objective.
fn vertex_oracle(c: &DVector<f64>, cs: &ConstraintSystem, gamma: f64) -> f64 {
    let m = cs.measurements();
    let nc = cs.rows();
    let nv = m + nc;
    let mut cost = vec![0.0; nv];
    let lo = vec![0.0; nv];
    let mut hi = vec![1.0; nv];
    for i in 0..m {
        cost[i] = c[i];
    }
    for j in 0..nc {
        cost[m + j] = gamma;
        let full = cs.g.row(j).sum();
        hi[m + j] = if full > cs.d[j] { cs.l[j] } else { full };
    }
    let rhs: Vec<f64> = (0..nc).map(|j| cs.d[j] - cs.l[j]).collect();
    let row = |j: usize, x: &[f64]| -> f64 { (0..m).map(|i| cs.g[(j, i)] * x[i]).sum::<f64>() + x[m + j] };
    let feasible = |x: &[f64]| -> bool {
        (0..nv).all(|k| x[k] >= lo[k] - 1e-9 && x[k] <= hi[k] + 1e-9) && (0..nc).all(|j| row(j, x) >= rhs[j] - 1e-9)
    };
    let mut best = f64::INFINITY;
    for tight in 0u32..(1 << nc) {
        let rows: Vec<usize> = (0..nc).filter(|j| tight >> j & 1 == 1).collect();
        let k = rows.len();
        for free in combinations(nv, k) {
            let fixed: Vec<usize> = (0..nv).filter(|v| !free.contains(v)).collect();
            for corner in 0u64..(1u64 << fixed.len()) {
                let mut x = vec![0.0; nv];
                for (b, &v) in fixed.iter().enumerate() {
                    x[v] = if corner >> b & 1 == 1 { hi[v] } else { lo[v] };
                }
                if k > 0 {
                    let mut a = DMatrix::zeros(k, k);
                    let mut r = DVector::zeros(k);
                    for (ri, &j) in rows.iter().enumerate() {
                        let mut coef = vec![0.0; nv];
                        for (i, ci) in coef.iter_mut().take(m).enumerate() {
                            *ci = cs.g[(j, i)];
                        }
                        coef[m + j] = 1.0;
                        r[ri] = rhs[j] - fixed.iter().map(|&v| coef[v] * x[v]).sum::<f64>();
                        for (ci, &v) in free.iter().enumerate() {
                            a[(ri, ci)] = coef[v];
                        }
                    }
                    let Some(sol) = a.lu().solve(&r) else { continue };
                    for (ci, &v) in free.iter().enumerate() {
                        x[v] = sol[ci];
                    }
                }
                if feasible(&x) {
                    best = best.min(x.iter().zip(&cost).map(|(a, b)| a * b).sum());
                }
            }
        }
    }
    best
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            cur.push(v);
            rec(v + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

#[test]
fn selection_lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let m = rng.random_range(1..=6);
        let n = rng.random_range(1..=4);
        let inst = instance(&mut rng, m, n, 1.6);
        let cs =
            build_g_d(&inst.h, &inst.var, &RapsOptions::default().prior_diagonal.of(&inst.prior), &inst.spec).unwrap();
        let c = DVector::from_fn(m, |_, _| rng.random_range(0.0..30.0));
        let (tau, mu) = solve_tau_lp(&c, &cs, 50.0).unwrap();
        let value = c.dot(&tau) + 50.0 * mu.sum();
        let oracle = vertex_oracle(&c, &cs, 50.0);
        assert!((value - oracle).abs() <= 1e-6 * oracle.abs().max(1.0), "lp {value} vs oracle {oracle}");
    }
}

/// BCD only reaches a block-stationary point of a problem that is concave in
/// tau, so the global binary optimum can be lower. What must hold is that no
/// binary selection improves the selection block at the returned `dx`, that
/// the trace is monotone and that the start at `tau = 1` is never beaten.
#[test]
fn bcd_is_monotone_and_block_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let m = rng.random_range(1..=10);
        let n = rng.random_range(1..=6);
        let inst = instance(&mut rng, m, n, 1.3);
        let sol =
            solve_soft_raps(&inst.prior, &inst.dz, &inst.h, &inst.var, &inst.spec, &RapsOptions::default()).unwrap();
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
        }
        assert!(sol.objective <= sol.objective_trace[0] + 1e-12);
        let r = &inst.dz - &inst.h * &sol.dx;
        let c = r.component_mul(&r).component_div(&inst.var);
        let cs = &sol.constraints;
        let block = |t: &DVector<f64>| c.dot(t) + 50.0 * slack_for(cs, t).sum();
        for mask in 0u32..(1 << m) {
            let b = DVector::from_fn(m, |i, _| f64::from(mask >> i & 1));
            let covered = (0..cs.rows()).filter(|&j| cs.is_hard(j)).all(|j| (cs.g.row(j) * &b)[0] >= cs.d[j]);
            if covered {
                assert!(block(&sol.tau) <= block(&b) + 1e-6 * block(&b).abs().max(1.0));
            }
        }
    }
}

#[test]
fn feasible_instances_meet_the_bound_without_slack() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let m = rng.random_range(1..=10);
        let n = rng.random_range(1..=6);
        let inst = instance(&mut rng, m, n, 0.95);
        let sol =
            solve_soft_raps(&inst.prior, &inst.dz, &inst.h, &inst.var, &inst.spec, &RapsOptions::default()).unwrap();
        assert!(sol.feasible);
        assert!(sol.mu.iter().all(|v| *v == 0.0));
        for (j, &k) in inst.spec.components.iter().enumerate() {
            assert!(sol.info_diag[k] >= inst.spec.bounds[j] - 1e-9);
        }
    }
}

#[test]
fn posterior_information_diagonal_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let inst = instance(&mut rng, 8, 5, 1.0);
        let tau = DVector::from_fn(8, |_, _| rng.random_range(0.0..1.0));
        let cs = build_g_d(&inst.h, &inst.var, &inst.prior.information.diagonal(), &inst.spec).unwrap();
        let post = posterior_information(&inst.h, &tau, &inst.var, &inst.prior.information).unwrap();
        let g_tau = &cs.g * &tau;
        for (j, &k) in inst.spec.components.iter().enumerate() {
            let gain = post[(k, k)] - inst.prior.information[(k, k)];
            assert!((gain - g_tau[j]).abs() <= 1e-9 * g_tau[j].abs().max(1.0));
        }
    }
}

#[test]
fn rescaling_a_measurement_row_keeps_the_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let inst = instance(&mut rng, 8, 4, 1.2);
        let base =
            solve_soft_raps(&inst.prior, &inst.dz, &inst.h, &inst.var, &inst.spec, &RapsOptions::default()).unwrap();
        let k = DVector::from_fn(8, |_, _| rng.random_range(0.2..5.0));
        let mut h = inst.h.clone();
        for (i, mut row) in h.row_iter_mut().enumerate() {
            row *= k[i];
        }
        let dz = inst.dz.component_mul(&k);
        let var = inst.var.component_mul(&k).component_mul(&k);
        let scaled = solve_soft_raps(&inst.prior, &dz, &h, &var, &inst.spec, &RapsOptions::default()).unwrap();
        assert!((&base.tau - &scaled.tau).amax() < 1e-6, "{} vs {}", base.tau.transpose(), scaled.tau.transpose());
    }
}

#[test]
fn infeasible_rows_carry_exact_slack() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let m = rng.random_range(1..=10);
        let inst = instance(&mut rng, m, 3, 3.0);
        let sol =
            solve_soft_raps(&inst.prior, &inst.dz, &inst.h, &inst.var, &inst.spec, &RapsOptions::default()).unwrap();
        let cs = &sol.constraints;
        let g_tau = &cs.g * &sol.tau;
        for j in 0..cs.rows() {
            assert!(g_tau[j] + sol.mu[j] >= cs.d[j] - cs.l[j] - 1e-9);
            let full = cs.full_information(j);
            let upper = if full > cs.d[j] { cs.l[j] } else { full };
            assert!(sol.mu[j] >= 0.0 && sol.mu[j] <= upper + 1e-9);
        }
    }
}
