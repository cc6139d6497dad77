use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rapsnav::estimators::{
    ekf_update, flags, linearize, raps_rtk_update, td_update, weighted_float_solve, LinearizedEpoch, TdConfig,
};
use rapsnav::frames::geodetic_to_ecef;
use rapsnav::gnss::{Constellation, DdEpoch, DdMeasurement, NoiseModel, RowKind, SatKey};
use rapsnav::linalg::is_psd;
use rapsnav::raps::{PerformanceSpec, RapsOptions};

const LAMBDA: f64 = 0.1903;

struct Scene {
    truth: Vector3<f64>,
    vel: Vector3<f64>,
    sats: Vec<(Vector3<f64>, f64)>,
}

fn scene(rng: &mut ChaCha8Rng, count: usize) -> Scene {
    let truth = geodetic_to_ecef(0.5, -1.7, 200.0);
    let c = rapsnav::frames::enu_to_ecef_at(&truth);
    let sats = (0..count)
        .map(|k| {
            let el: f64 = if k == 0 { 1.3 } else { rng.random_range(0.25..1.2) };
            let az: f64 = k as f64 * 2.4 + rng.random_range(0.0..0.5);
            let los = c * Vector3::new(el.cos() * az.sin(), el.cos() * az.cos(), el.sin());
            (truth + los * 2.2e7, el)
        })
        .collect();
    Scene { truth, vel: Vector3::new(4.0, -9.0, 0.3), sats }
}

/// Noisy DD epoch at the scene's truth with the first satellite as pivot.
fn dd_epoch(sc: &Scene, rng: &mut ChaCha8Rng, nm: &NoiseModel, ambiguities: &[f64], bias: &[f64]) -> DdEpoch {
    let (o, oel) = sc.sats[0];
    let p = sc.truth;
    let key = |i: usize| SatKey { constellation: Constellation::Gps, sat_id: i as u32 + 1 };
    let measurements = sc.sats[1..]
        .iter()
        .enumerate()
        .map(|(i, &(s, el))| {
            let r = (p - s).norm() - (p - o).norm();
            let los = (p - s).normalize() - (p - o).normalize();
            let mut noise = |kind| {
                let z: f64 = StandardNormal.sample(rng);
                z * nm.dd_sigma(kind, el, oel)
            };
            DdMeasurement {
                sat: key(i + 1),
                pivot: key(0),
                code: r + noise(RowKind::Code) + bias[i],
                doppler: los.dot(&sc.vel) + noise(RowKind::Doppler),
                phase: r + LAMBDA * ambiguities[i] + noise(RowKind::Phase),
                wavelength: LAMBDA,
                sat_position: s,
                pivot_position: o,
                elevation: el,
                pivot_elevation: oel,
            }
        })
        .collect();
    DdEpoch { t: 0.0, measurements }
}

fn prior_cov(n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    for k in 0..n {
        p[(k, k)] = match k {
            0..=2 => 4.0,
            3..=5 => 0.25,
            6..=8 => 1e-4,
            9..=11 => 1e-4,
            _ => 1e-6,
        };
    }
    p
}

fn setup(seed: u64, count: usize, bias: Option<(usize, f64)>) -> (Scene, LinearizedEpoch, Vector3<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sc = scene(&mut rng, count);
    let nm = NoiseModel::default();
    let amb: Vec<f64> = (1..count).map(|_| rng.random_range(-20..20) as f64).collect();
    let mut b = vec![0.0; count - 1];
    if let Some((k, v)) = bias {
        b[k] = v;
    }
    let dd = dd_epoch(&sc, &mut rng, &nm, &amb, &b);
    let offset = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let prior_p = sc.truth + offset;
    let ep = linearize(&dd, &prior_p, &sc.vel, 15, &nm).unwrap();
    (sc, ep, prior_p)
}

fn pos_error(dx: &DVector<f64>, prior_p: &Vector3<f64>, truth: &Vector3<f64>) -> f64 {
    (prior_p + Vector3::new(dx[0], dx[1], dx[2]) - truth).norm()
}

#[test]
fn ekf_matches_dense_normal_equations() {
    let (_, ep, _) = setup(1, 8, None);
    let p = prior_cov(15);
    let out = ekf_update(&p, &ep).unwrap();
    let m = ep.m();
    let mut info = DMatrix::zeros(15 + m, 15 + m);
    info.view_mut((0, 0), (15, 15)).copy_from(&p.clone().try_inverse().unwrap());
    let w = DMatrix::from_diagonal(&ep.var.map(|v| 1.0 / v));
    info += ep.h.transpose() * &w * &ep.h;
    let rhs = ep.h.transpose() * &w * &ep.dz;
    let full = info.clone().try_inverse().unwrap();
    let dchi = &full * rhs;
    assert!((out.dx - dchi.rows(0, 15)).amax() < 1e-8);
    assert!((out.ambiguities - dchi.rows(15, m)).amax() < 1e-6);
    let cov = full.view((0, 0), (15, 15)).into_owned();
    assert!((&out.covariance - &cov).amax() <= 1e-8 * cov.amax());
    assert!(is_psd(&out.covariance, 1e-9));
}

#[test]
fn zero_residuals_give_zero_correction_and_shrink_covariance() {
    let (_, mut ep, _) = setup(2, 7, None);
    ep.dz.fill(0.0);
    let p = prior_cov(15);
    let out = ekf_update(&p, &ep).unwrap();
    assert!(out.dx.amax() < 1e-12);
    for k in 0..6 {
        assert!(out.covariance[(k, k)] < p[(k, k)]);
    }
}

#[test]
fn phase_rows_are_absorbed_by_their_ambiguities() {
    let (_, ep, _) = setup(3, 9, None);
    let p = prior_cov(15);
    let with_phase = ekf_update(&p, &ep).unwrap();
    let mut tau = DVector::from_element(ep.rows(), 1.0);
    for s in 0..ep.m() {
        tau[3 * s + 2] = 0.0;
    }
    let without = weighted_float_solve(&p, &ep, &tau).unwrap();
    assert!((with_phase.dx - without.dx).amax() < 1e-8);
}

#[test]
fn unit_weights_reproduce_ekf() {
    // An unreachable spec keeps every inlier: dropping any row costs more slack than risk.
    let spec = PerformanceSpec::position_velocity([1e6; 6]).unwrap();
    for seed in 0..20 {
        let (_, ep, _) = setup(10 + seed, 8, None);
        let p = prior_cov(15);
        let raps = raps_rtk_update(&p, &ep, &spec, &RapsOptions::default(), true).unwrap();
        assert!(raps.weights.iter().all(|w| *w == 1.0));
        let ekf = ekf_update(&p, &ep).unwrap();
        assert!((&raps.dx - &ekf.dx).amax() < 1e-8);
        assert!((&raps.covariance - &ekf.covariance).amax() <= 1e-8 * ekf.covariance.amax());
        assert!(!raps.feasible && raps.flags & flags::INFEASIBLE != 0);
    }
}

#[test]
fn phase_weights_follow_code_weights() {
    let spec = rapsnav::raps::tcheby_spec("lane-level-paper").unwrap();
    for seed in 0..10 {
        let (_, ep, _) = setup(40 + seed, 10, Some((2, 35.0)));
        let out = raps_rtk_update(&prior_cov(15), &ep, &spec, &RapsOptions::default(), true).unwrap();
        for s in 0..ep.m() {
            assert_eq!(out.weights[3 * s + 2], out.weights[3 * s]);
        }
        assert!(is_psd(&out.covariance, 1e-9));
    }
}

#[test]
fn dropped_code_removes_satellite_and_ambiguity() {
    let (_, ep, _) = setup(4, 8, None);
    let mut tau = DVector::from_element(ep.rows(), 1.0);
    tau[0] = 0.0;
    tau[2] = 0.0;
    let sol = weighted_float_solve(&prior_cov(15), &ep, &tau).unwrap();
    assert!(!sol.estimated[0]);
    assert_eq!(sol.ambiguities[0], 0.0);
    assert!(sol.flags & flags::DROPPED_AMBIGUITY != 0);
    let mut ep2 = ep.clone();
    ep2.dz[0] += 1e3;
    ep2.dz[2] -= 7.0;
    let sol2 = weighted_float_solve(&prior_cov(15), &ep2, &tau).unwrap();
    assert!((sol.dx - sol2.dx).amax() < 1e-9);
}

#[test]
fn integer_slips_do_not_move_the_navigation_solution() {
    let (_, ep, _) = setup(5, 9, None);
    let p = prior_cov(15);
    let spec = rapsnav::raps::tcheby_spec("lane-level-paper").unwrap();
    let mut slipped = ep.clone();
    for s in 0..ep.m() {
        slipped.dz[3 * s + 2] += LAMBDA * (s as f64 * 3.0 - 7.0);
    }
    for (a, b) in [
        (ekf_update(&p, &ep).unwrap(), ekf_update(&p, &slipped).unwrap()),
        (
            raps_rtk_update(&p, &ep, &spec, &RapsOptions::default(), true).unwrap(),
            raps_rtk_update(&p, &slipped, &spec, &RapsOptions::default(), true).unwrap(),
        ),
    ] {
        assert!((a.dx - b.dx).amax() < 1e-8);
    }
}

#[test]
fn td_without_outliers_equals_ekf() {
    let (_, mut ep, _) = setup(6, 8, None);
    ep.dz.fill(1e-3);
    let p = prior_cov(15);
    let td = td_update(&p, &ep, &TdConfig::default()).unwrap();
    let ekf = ekf_update(&p, &ep).unwrap();
    assert!(td.weights.iter().all(|w| *w == 1.0));
    assert!((td.dx - ekf.dx).amax() < 1e-12);
}

#[test]
fn td_excludes_gated_code_with_its_phase() {
    let (_, mut ep, _) = setup(7, 8, None);
    ep.dz.fill(0.0);
    let p = prior_cov(15);
    let h = ep.h.columns(0, 15).row(3).into_owned();
    let s = ((&h * &p * h.transpose())[0] + ep.var[3]).sqrt();
    ep.dz[3] = 5.0 * s;
    let td = td_update(&p, &ep, &TdConfig { iterative: false, ..TdConfig::default() }).unwrap();
    assert_eq!(td.weights[3], 0.0);
    assert_eq!(td.weights[5], 0.0);
    assert_eq!(td.weights[4], 1.0);
    assert_eq!(td.weights.iter().filter(|w| **w == 0.0).count(), 2);
}

#[test]
fn td_beats_ekf_on_a_biased_satellite() {
    let mut better = 0;
    for seed in 0..20 {
        let (sc, ep, prior_p) = setup(100 + seed, 9, Some((3, 30.0)));
        let p = prior_cov(15);
        let td = td_update(&p, &ep, &TdConfig::default()).unwrap();
        let ekf = ekf_update(&p, &ep).unwrap();
        if pos_error(&td.dx, &prior_p, &sc.truth) < pos_error(&ekf.dx, &prior_p, &sc.truth) {
            better += 1;
        }
    }
    assert!(better >= 18, "TD better on {better}/20 epochs");
}

#[test]
fn empty_epoch_passes_the_prior_through() {
    let nm = NoiseModel::default();
    let dd = DdEpoch::default();
    let ep = linearize(&dd, &Vector3::new(6.4e6, 0.0, 0.0), &Vector3::zeros(), 15, &nm).unwrap();
    let p = prior_cov(15);
    for out in [
        ekf_update(&p, &ep).unwrap(),
        td_update(&p, &ep, &TdConfig::default()).unwrap(),
        raps_rtk_update(&p, &ep, &PerformanceSpec::zero(6), &RapsOptions::default(), true).unwrap(),
    ] {
        assert_eq!(out.covariance, p);
        assert!(out.flags & flags::PRIOR_PASSTHROUGH != 0);
    }
}
