//! Stochastic flux-driven channel flow in two dimensions.
//!
//! Pipeline: a flux path `F(t)` ([`signals`]) is inverted to the driving pressure
//! gradient `f(t)` ([`volterra`]), which drives the outlet heat problem
//! ([`heat_kernel`]). The outlet profiles are blended into a divergence-free
//! flux-carrying field `w` ([`basic_field`]). The perturbation `v = u − w` solves a
//! stochastic Navier–Stokes system integrated by a divergence-free Galerkin scheme
//! ([`galerkin`]), and [`verify`] checks the energy and uniqueness inequalities.

// NaN-rejecting `!(x > 0.0)` guards are used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basic_field;
pub mod error;
pub mod galerkin;
pub mod heat_kernel;
pub mod pipeline;
pub mod quadrature;
pub mod signals;
pub mod verify;
pub mod volterra;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
