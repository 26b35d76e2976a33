//! Anomalous-path detection on finite 2D lattices.
//!
//! The library simulates random sceneries over triangular/trapezoidal
//! lattice regions, evaluates quadratic and multi-scale detection
//! statistics without ever materializing the underlying kernel matrix,
//! estimates minimax risk by Monte Carlo, and ships a numerical
//! verification suite for the supporting estimates. The `trailscan`
//! binary exposes the whole pipeline behind a JSON/CSV oriented CLI.

pub mod cli;
pub mod detect;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod lattice;
pub mod multiscale;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use kernel::{KernelView, Scenery};
pub use lattice::{Aperture, DirectedPath, LatticeSpec, SiteSet};
