//! Steady free fall and quasi-steady sedimentation of slender rigid bodies
//! in a hyperviscous incompressible fluid.
//!
//! A body is a curve carrying a line mass density. The fluid obeys
//! `∇p − Δu + ℓ²ΔΔu = 0` away from the curve; the fourth-order term makes
//! the velocity continuous, so a rigid motion can be imposed on the curve
//! itself. The pipeline is
//!
//! 1. [`geometry::discretize`] the curve into Gauss–Legendre nodes,
//! 2. [`mobility::resistance_set`] from six unit rigid-motion solves,
//! 3. [`freefall::steady_states`] from the real eigenpairs of the 3×3 fall operator,
//! 4. optionally [`dynamics::integrate`] the quasi-steady rigid-body equations.
//!
//! The [`cli`] module wires these together behind a JSON config.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod freefall;
pub mod geometry;
pub mod kernel;
pub mod mobility;
pub mod quadrature;

pub use error::{Error, Result};
