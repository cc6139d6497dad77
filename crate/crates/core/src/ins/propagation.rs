use nalgebra::{DMatrix, Matrix3};

use super::state::{ImuNoiseSpec, ImuSample, Matrix15, NavState, ATT, BA, BG, POS, VEL};
use crate::error::{NavError, Result};
use crate::frames::EarthModel;
use crate::linalg::{is_psd, skew};

/// Continuous error dynamics `d(dx)/dt = A dx + G w` linearized at `nav`
/// with the bias-corrected sample `s`.
pub fn error_dynamics(nav: &NavState, s: &ImuSample, earth: EarthModel) -> Matrix15 {
    let c = nav.attitude.to_rotation_matrix().into_inner();
    let f = s.specific_force - nav.accel_bias;
    let w = s.angular_rate - nav.gyro_bias;
    let omega = earth.rotation_rate();

    let mut a = Matrix15::zeros();
    a.fixed_view_mut::<3, 3>(POS, VEL).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(VEL, POS).copy_from(&earth.gravity_gradient(&nav.position));
    a.fixed_view_mut::<3, 3>(VEL, VEL).copy_from(&(-2.0 * skew(&omega)));
    a.fixed_view_mut::<3, 3>(VEL, ATT).copy_from(&(-c * skew(&f)));
    a.fixed_view_mut::<3, 3>(VEL, BA).copy_from(&(-c));
    a.fixed_view_mut::<3, 3>(ATT, ATT).copy_from(&(-skew(&w)));
    a.fixed_view_mut::<3, 3>(ATT, BG).copy_from(&(-Matrix3::identity()));
    a
}

/// `G Q Gᵀ` for the white-noise inputs; the accelerometer term is rotation
/// invariant so no attitude dependence remains.
pub fn process_noise_density(noise: &ImuNoiseSpec) -> Matrix15 {
    let mut q = Matrix15::zeros();
    let blocks =
        [(VEL, noise.accel_noise), (ATT, noise.gyro_noise), (BA, noise.accel_bias_walk), (BG, noise.gyro_bias_walk)];
    for (off, density) in blocks {
        for i in 0..3 {
            q[(off + i, off + i)] = density * density;
        }
    }
    q
}

/// Transition matrix and process noise accumulated between aiding epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct StmAccumulator {
    pub phi: Matrix15,
    pub q: Matrix15,
}

impl Default for StmAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl StmAccumulator {
    pub fn new() -> Self {
        StmAccumulator { phi: Matrix15::identity(), q: Matrix15::zeros() }
    }

    pub fn reset(&mut self) {
        *self = Self::new();
    }

    /// One IMU step: `Phi <- F Phi`, `Q <- F Q Fᵀ + Qd` with `F = I + A dt`
    /// and trapezoidal `Qd = (F Qc Fᵀ + Qc) dt / 2`.
    pub fn step(
        &mut self,
        nav: &NavState,
        s: &ImuSample,
        noise: &ImuNoiseSpec,
        dt: f64,
        earth: EarthModel,
    ) -> Result<()> {
        nav.check()?;
        if !(dt > 0.0) {
            return Err(NavError::invalid(format!("non-positive time step {dt}")));
        }
        let f = Matrix15::identity() + error_dynamics(nav, s, earth) * dt;
        let qc = process_noise_density(noise);
        let qd = (f * qc * f.transpose() + qc) * (0.5 * dt);
        self.phi = f * self.phi;
        self.q = f * self.q * f.transpose() + qd;
        self.q = (self.q + self.q.transpose()) * 0.5;
        Ok(())
    }

    /// Accumulation over `[t0, t1]` followed by `later` over `[t1, t2]`.
    pub fn then(&self, later: &StmAccumulator) -> StmAccumulator {
        StmAccumulator { phi: later.phi * self.phi, q: later.phi * self.q * later.phi.transpose() + later.q }
    }
}

pub fn accumulate_stm(
    acc: &StmAccumulator,
    nav: &NavState,
    s: &ImuSample,
    noise: &ImuNoiseSpec,
    dt: f64,
    earth: EarthModel,
) -> Result<StmAccumulator> {
    let mut out = acc.clone();
    out.step(nav, s, noise, dt, earth)?;
    Ok(out)
}

/// `Phi P Phiᵀ + Q`, symmetrized; an indefinite result signals divergence.
pub fn propagate_covariance(p_plus: &Matrix15, acc: &StmAccumulator) -> Result<Matrix15> {
    let p = acc.phi * p_plus * acc.phi.transpose() + acc.q;
    let p = (p + p.transpose()) * 0.5;
    let dynamic = DMatrix::from_column_slice(15, 15, p.as_slice());
    if !p.iter().all(|v| v.is_finite()) || !is_psd(&dynamic, 1e-9) {
        return Err(NavError::Divergence("propagated covariance is not positive semidefinite".into()));
    }
    Ok(p)
}
