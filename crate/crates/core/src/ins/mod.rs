//! Strapdown inertial navigation in ECEF: state, mechanization, error-state
//! propagation and multiplicative attitude correction.

mod init;
mod mechanization;
mod propagation;
mod state;

pub use init::{level_and_align, LevelingAccumulator};
pub use mechanization::{apply_correction, boxplus, error_between, mechanize};
pub use propagation::{accumulate_stm, error_dynamics, process_noise_density, propagate_covariance, StmAccumulator};
pub use state::{ErrorState, ImuNoiseSpec, ImuSample, Matrix15, NavState, ATT, BA, BG, ERROR_STATE_DIM, POS, VEL};
