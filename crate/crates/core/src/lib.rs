//! Contact and precontact mechanics.
//!
//! The crate builds (pre)contact structures from user expressions, runs the
//! constraint algorithm for singular systems, evaluates Jacobi and
//! Dirac-Jacobi brackets and integrates contact Hamiltonian and Herglotz
//! dynamics.

pub mod brackets;
pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod function;
pub mod geometry;
pub mod jet;
pub mod lagrangian;
pub mod linalg;

pub use error::{Error, Result};
