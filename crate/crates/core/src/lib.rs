//! Dense numerical laboratory for non-self-adjoint Schrodinger operators `H = -Δ + V`:
//! free resolvents, Birman-Schwinger inversion, zero-energy Jordan structure, the
//! regularized low-energy inverse and dispersive-decay measurements.

pub mod birman_schwinger;
pub mod cutoff;
pub mod error;
pub mod evolution;
pub mod fit;
pub mod ft_diagnostics;
pub mod grid;
pub mod linalg;
pub mod low_energy;
pub mod potentials;
pub mod resolvent;
pub mod threshold;

pub type C64 = num_complex::Complex64;

pub use error::{Error, Result};
pub use grid::{make_grid, DenseOperator, Grid, GridFunction, GridMode};
pub use potentials::PotentialSpec;
