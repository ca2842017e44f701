//! One-dimensional quantum dynamics in the Dirac-Bohm picture.
//!
//! The crate evolves wave functions on a uniform grid, splits them into
//! amplitude and action fields, integrates Bohm trajectories, composes
//! time-sliced transition amplitudes into propagators and samples Nelson
//! diffusion ensembles whose conditional mean velocities reproduce the
//! Bohm guidance field.

pub mod bohm;
pub mod ensemble;
mod error;
pub mod evolve;
pub mod fields;
pub mod picture;
pub mod propagator;
pub mod spectral;

pub use error::{Error, Result};
pub use fields::{PhysicalParams, PolarField, Potential, PotentialKind, SpatialGrid, WaveField};

pub use num_complex::Complex64;
