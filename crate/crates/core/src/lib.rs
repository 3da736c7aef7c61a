//! Dipole emission into photonic-crystal waveguides: plane-wave and grid Bloch
//! mode solvers, a 2D frequency-domain solver with active waveguide
//! terminations, and Poynting-flux channel accounting.

pub mod config;
pub mod emission;
pub mod error;
pub mod fdfd;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod pwe;
pub mod sweeps;

pub use error::{Error, Result};
