//! Numerical companion for the second-order ground state energy of a dilute
//! Bose gas on the unit torus in the intermediate scaling regime.
//!
//! The pipeline runs from the scaled potential through the Neumann scattering
//! problem to the Bogoliubov coefficients and energy, with exact Fock-space
//! checks and a symbolic expansion of the generalized Bogoliubov action.

pub mod bogoliubov;
pub mod commutator;
pub mod error;
pub mod fit;
pub mod fock;
pub mod lattice;
pub mod linalg;
pub mod potential;
pub mod quad;
pub mod scattering;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
