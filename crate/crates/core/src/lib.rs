//! Bayesian phase estimation on an adaptive one-dimensional grid.
//!
//! The crate is organised bottom-up:
//!
//! - [`likelihood`]: measurement models and outcome simulation.
//! - [`grid`]: the adaptive posterior mesh (error density, refine, merge).
//! - [`smc`]: weighted particle ensembles and Liu-West resampling.
//! - [`filters`]: complete inference loops (grid, Liu-West, hybrid grid x SMC).
//! - [`analysis`]: batch statistics and principal kurtosis analysis.
//! - [`harness`]: run configuration, batch execution and result files.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod filters;
pub mod grid;
pub mod harness;
pub mod likelihood;
pub mod smc;

pub use error::{Error, Result};
