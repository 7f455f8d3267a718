//! Numerical laboratory for the mean-field polaron path measure: the radial
//! Pekar variational solver, Coulomb functionals of occupation measures, a
//! path-space Metropolis sampler with tempering, and the Pekar-process SDE
//! with its change-of-measure identities.

pub mod coulomb;
pub mod error;
pub mod grid;
pub mod path;
pub mod report;
pub mod sampler;
pub mod sde;
pub mod solver;
pub mod stats;

pub use error::{CoreError, Result};
pub use grid::{integrate_radial, interpolate, radial_derivative, RadialFunction, RadialGrid};
pub use solver::{energy, ground_state, newton_potential, scf_iterate, PekarSolution, ScfConfig};
