//! Friedrichs, Poincaré and Maxwell constants of box-type domains, computed
//! on a staggered-grid discretization of the de Rham complex.
//!
//! The pipeline is: [`domain`] voxelizes a domain and enumerates grid DOFs,
//! [`complex`] assembles gradient, curl and divergence with boundary masks,
//! [`eigensolve`] extracts the smallest eigenpairs, [`constants`] turns them
//! into constants and [`verify`] checks the inequality chain
//! `cp0 <= cmt <= cmn = cp <= diam / pi`.

pub mod cli;
pub mod complex;
pub mod constants;
pub mod domain;
pub mod eigensolve;
pub mod error;
pub mod helmholtz;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
