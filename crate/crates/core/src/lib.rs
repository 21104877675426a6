//! Income fluctuation problem with capital income risk.
//!
//! The crate checks the spectral-radius conditions under which the Coleman
//! operator contracts and the wealth process is globally stable, solves for the
//! optimal consumption policy by time iteration, simulates the stationary
//! wealth distribution and summarizes it with tail exponents, Gini
//! coefficients, Lorenz curves and wealth shares.

pub mod assumptions;
pub mod cli;
pub mod config;
pub mod coleman;
pub mod discretize;
pub mod error;
pub mod io;
pub mod model;
pub mod quadrature;
pub mod simulate;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
