//! Simulation and verification toolkit for the stochastic heat equation on
//! [0, 1] driven by noise that is fractional (Hurst `H > 1/2`) in time and
//! white in space.

pub mod error;
pub mod config;
pub mod export;
pub mod field;
pub mod ito;
pub mod kernels;
pub mod modes;
pub mod noise;
pub mod quadrature;
pub mod rules;
pub mod stats;

pub use error::{Error, Result};
