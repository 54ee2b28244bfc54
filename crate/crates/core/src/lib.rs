//! Discretization and feedback stabilization of a coupled two-field
//! parabolic system.
//!
//! The crate assembles P1 finite element matrices on triangulations of the
//! unit square, locates the unstable part of the spectrum of the associated
//! matrix pencil, synthesizes a low-rank stabilizing feedback through a
//! projected algebraic Riccati equation, advances the closed loop with a
//! BE/BDF2 scheme, and drives the eigenvalue- and solution-convergence
//! studies behind the `stab` command line tool.

pub mod banded;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod kernels;
pub mod mesh;
pub mod riccati;
pub mod schur;
pub mod sparse;
pub mod spectral;
pub mod timestep;

pub use error::{Error, Result};
