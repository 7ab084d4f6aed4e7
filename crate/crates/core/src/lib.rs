//! Lattice verification toolkit for the mapping of Liouville field theory
//! onto a two-component scalar theory coupled to a longitudinal massive
//! vector field.
//!
//! Every step of the mapping is an executable numeric operation:
//!
//! - [`lattice`]: periodic 2D lattice, fields and discrete operators.
//! - [`diffusion`]: gauge-coupled diffusion, closed-form kernels, gauge
//!   covariance.
//! - [`walkers`]: random-walk path integral and the grand-canonical series.
//! - [`gaussian`]: exact Gaussian integration of the two scalar fields and
//!   the determinant of the retarded operator.
//! - [`mc`]: Metropolis samplers for the Liouville and the finite-`T`
//!   mapped theories.
//! - [`verify`] and [`runner`]: the acceptance checks and the experiment
//!   runner behind the `liouville-lattice` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diffusion;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod lattice;
pub mod mc;
pub mod quad;
pub mod runner;
pub mod stats;
pub mod verify;
pub mod walkers;

pub use error::{Error, Result};
