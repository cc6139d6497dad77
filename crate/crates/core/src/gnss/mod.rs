//! Between-receiver and between-satellite differencing, residuals, Jacobians
//! and noise for code, Doppler and carrier-phase observables.

mod differencing;
mod fix;
mod model;
mod obs;

pub use differencing::{
    double_difference, form_dd_epoch, select_pivot, single_difference, DdEpoch, DdMeasurement, SdObservation,
};
pub use fix::{code_position_fix, doppler_velocity_fix};
pub use model::{
    build_jacobian, build_noise, elevation_sigma, los_vector, predict_residuals, AugmentedState, NoiseModel, RowKind,
    ROWS_PER_SAT,
};
pub use obs::{compensate_doppler, Constellation, EpochPair, SatKey, SatObs};
