//! Balanced and sigma-balanced metrics on polarized toric manifolds.

pub mod cli;
pub mod error;
pub mod polytope;
pub mod quantization;
pub mod solver;
pub mod weights;

pub use error::{Error, Result};
