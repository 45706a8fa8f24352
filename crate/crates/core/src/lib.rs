//! Core library for the neural stencil emulator study: finite-difference
//! reference solvers, stencil dataset construction, sampling designs, the
//! emulator itself, and rollout evaluation.

pub mod dataset;
pub mod design;
pub mod error;
pub mod gp;
pub mod grid;
pub mod io;
pub mod model;
pub mod pca;
pub mod pde;
pub mod rollout;
pub mod sobol;
pub mod train;

pub use error::{Error, Result};
