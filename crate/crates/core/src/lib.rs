//! Approximation of deterministic (first-order) mean field type control
//! systems by finite mean field Markov chains.
//!
//! The crate is organised bottom-up:
//!
//! - [`measures`]: finite weighted point clouds, lattice grids and lattice
//!   distributions, together with the embedding of a lattice distribution as
//!   a point measure.
//! - [`transport`]: exact discrete optimal transport (transportation simplex),
//!   Wasserstein distances, disintegration of plans and a brute-force oracle.
//! - [`controls`]: relaxed controls on explicit time grids, distributions of
//!   controls, feedback policies and their concatenation/transfer algebra.
//! - [`dynamics`]: particle integration of the controlled mean field system.
//! - [`chain`]: the lattice Markov chain, its Kolmogorov forward equation and
//!   a thinning-based jump process sampler.
//! - [`coupling`]: the two model-predictive coupling constructions, the
//!   discrepancy between flows and the bundle (Hausdorff) estimate.
//! - [`problems`]: built-in vector fields with analytically known constants.
//! - [`strategies`]: seeded feedback laws used to generate policies and
//!   distributions of controls on arbitrary grids and clouds.
//! - [`io`]: CSV and JSON readers/writers.

pub mod chain;
pub mod controls;
pub mod coupling;
pub mod dynamics;
mod error;
pub mod io;
pub mod measures;
pub mod problems;
pub mod strategies;
pub mod time_grid;
pub mod transport;

pub use error::{Error, Result};
