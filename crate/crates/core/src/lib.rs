//! Stochastic Schrödinger trajectories and master-equation solvers for open
//! two-level systems driven by white and colored noise.
//!
//! Units are reduced with ħ = 1. Times are measured in units of the inverse
//! correlation time when θ = 1.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod noise;
pub mod qme;
pub mod quantum;
pub mod sse;
pub mod table;

pub use error::{Error, Result};
pub use num_complex::Complex64;
