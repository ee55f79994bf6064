//! Identification of symmetric linear dynamical systems from a single
//! trajectory by time-shifted moment matching, with least-squares baselines,
//! dense algebraic oracles and a sample-complexity sweep harness.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod moments;
pub mod oracles;
pub mod simulate;
pub mod sysgen;

pub use error::{Error, Result};
pub use matrix::{Matrix, Spectrum};
pub use simulate::{rollout, Simulator, StateRows, Trajectory};
pub use sysgen::{partition, Blocks, SymmetricDynamics};
