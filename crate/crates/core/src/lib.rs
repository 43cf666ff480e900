//! Learning-based economic model predictive control with clustered kernel
//! Lipschitz regression.

pub mod error;
pub mod controller;
pub mod error_analysis;
pub mod harness;
pub mod plants;
pub mod regression;
pub mod rng;
pub mod sets;
pub mod solvers;

pub use error::{Error, Result};
