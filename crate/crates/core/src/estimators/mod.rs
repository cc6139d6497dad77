//! Per-epoch measurement updates over the float-ambiguity augmented state.

mod epoch;
mod float;
mod raps_rtk;
mod strategy;
mod td;

pub use epoch::{linearize, LinearizedEpoch};
pub use float::{ekf_update, marginalize_ambiguities, weighted_float_solve, FloatSolution};
pub use raps_rtk::{local_frame_transform, raps_rtk_update};
pub use strategy::{flags, EkfUpdate, EstimatorConfig, MeasurementUpdate, RapsUpdate, TdUpdate, UpdateOutcome};
pub use td::{td_update, TdConfig};
