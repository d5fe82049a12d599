//! Crank-Nicolson B-spline Galerkin solver for linear Schrödinger
//! equations on changing 1D meshes, with a posteriori error estimators and
//! a time-space adaptive driver.

pub mod adaptive;
pub mod assembly;
pub mod error;
pub mod estimators;
pub mod field;
pub mod harness;
pub mod mesh;
pub mod problems;
pub mod scheme;
pub mod spline;
pub mod transfer;

pub use error::{Error, Result};
