//! Grouped parameter estimation for linear regression with many covariates.
//!
//! Coefficients are clustered into `k` groups and one value is estimated per
//! group. The crate is `no_std` and only needs `alloc`; IO, the command line
//! and the parallel Monte Carlo runner live in `gpe-cli`.

#![no_std]

extern crate alloc;

pub mod admm;
pub mod cluster1d;
pub mod comparators;
pub mod dataset;
pub mod error;
pub mod gpe;
pub mod inference;
pub mod linalg;
pub mod normal;
pub mod rng;
pub mod selection;
pub mod simulation;

pub use error::{Error, Result};
