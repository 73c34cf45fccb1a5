//! Exact diagonalization of periodic spin-½ models and detection of quantum
//! phase transitions from nearest-neighbor two-qubit correlations of a
//! mixture of the ground and low-lying excited states.

pub mod cli;
pub mod eigen;
pub mod error;
pub mod io;
pub mod lattice;
pub mod measures;
pub mod mixture;
pub mod sweep;
mod symmetry;

pub use error::{Error, Result};
