#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod eval;
pub mod filter;
pub mod frames;
pub mod gnss;
pub mod ins;
pub mod io;
pub mod linalg;
pub mod propagators;
pub mod raps;
pub mod registry;
pub mod rng;
pub mod sim;

pub use error::{NavError, Result};
