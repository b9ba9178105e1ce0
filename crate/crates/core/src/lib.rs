//! Monotonicity-based inclusion detection for time-harmonic linear
//! elasticity on a box, discretized with trilinear hexahedra.
//!
//! The pipeline is: build a mesh and boundary layout ([`model`]), assemble
//! stiffness, mass and boundary loads ([`assembly`]), solve the forward
//! problems and form Neumann-to-Dirichlet matrices ([`forward`]), perturb
//! them ([`noise`]), and run the eigenvalue-count tests ([`spectral`],
//! [`recon`]).

pub mod assembly;
pub mod error;
pub mod forward;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod recon;
pub mod scenario;
pub mod spectral;

pub use error::{Error, Result};
pub use recon::{Method, ReconResult, Session, SweepReport};
pub use scenario::{Scenario, ThresholdPolicy};
