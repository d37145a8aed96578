//! Deterministic spectral flows of random matrix ensembles and a Monte Carlo oracle for them.

pub mod action;
pub mod characteristics;
pub mod chiral_flow;
pub mod circular_jacobi_flow;
pub mod error;
pub mod gaussian_flow;
pub mod mc_oracle;
pub mod measures;
pub mod rootflow;

pub use error::{FlowError, Result};
pub use num_complex::Complex64 as C64;
