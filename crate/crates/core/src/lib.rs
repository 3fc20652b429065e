//! Construction, verification and reduction of a family of 3-D Poisson
//! structures.
//!
//! A member is given by `J12 = eta·chi12·phi3`, `J23 = eta·chi23·phi1`,
//! `J31 = eta·chi31·phi2` with `chi_ij = psi_i(x_i) - psi_j(x_j) + kappa_ij`.
//! The crate evaluates such structures, checks the Jacobi identity,
//! computes Casimir invariants, builds global Darboux charts and integrates
//! the resulting dynamics.

pub mod casimir;
pub mod cli;
pub mod darboux;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod family;
pub mod scalar_fields;
pub mod systems;
pub mod verification;

pub use error::{Error, Result};

/// A point of phase space.
pub type Point = [f64; 3];
