//! Risk-averse performance-specified measurement selection.
//!
//! Measurement weights `tau in [0,1]^m` are chosen to minimise the
//! outlier-inclusion risk subject to a lower bound on the diagonal of the
//! posterior information; slack variables keep the problem solvable when the
//! bound cannot be met. The joint problem is solved by block-coordinate
//! descent between a weighted least-squares step and an exact LP step.

mod bcd;
mod binary;
mod constraint;
mod lp;
mod risk;
mod spec;
mod tau;

pub use bcd::{solve_soft_raps, PriorDiagonal, RapsOptions, RapsSolution};
pub use binary::{brute_force_binary, BinarySolution, MAX_BINARY_MEASUREMENTS};
pub use constraint::{build_g_d, ConstraintSystem};
pub use lp::{solve_lp, LinearProgram, LpSolution, Sense};
pub use risk::{compute_risk, posterior_information, solve_wls, GaussianPrior};
pub use spec::{tcheby_spec, PerformanceSpec, SPEC_PRESETS};
pub use tau::{slack_for, solve_tau_lp};
