//! Multiscale numerics for collective alignment of self-propelled rigid bodies.
//!
//! The crate is organised bottom-up:
//!
//! * [`rotations`]: rotation matrices, unit quaternions, Q-tensors and the maps between them.
//! * [`sampling`]: von Mises laws on SO(3) and on the unit quaternions, plus the constant `c1`.
//! * [`alignment`]: observation kernels, periodic cell grids and local target orientations.
//! * [`micro`]: the gradual (SDE) and jump (PDMP) particle dynamics in both representations.
//! * [`gci`]: generalized collision invariant profiles and the hydrodynamic constants.
//! * [`macroscopic`]: differential operators, residuals and an explicit integrator for the
//!   macroscopic body-attitude system.
//!
//! [`quadrature`] and [`rng`] hold the shared numerical plumbing.

pub mod alignment;
pub mod error;
pub mod gci;
pub mod macroscopic;
pub mod micro;
pub mod quadrature;
pub mod rng;
pub mod rotations;
pub mod sampling;

pub use error::{Error, Result};
pub use rotations::{Rotation, UnitQuaternion};
