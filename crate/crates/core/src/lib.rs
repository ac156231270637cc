//! Constrained Langevin training and sampling for small neural networks.
//!
//! Parameters are split into unconstrained blocks, magnitude-bounded
//! weights (`|θ| ≤ r`, handled through a slack variable on a circle) and
//! orthogonal weight matrices. The [`integrators`] module advances them with
//! overdamped or underdamped Langevin steps that stay on the constraint set.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod integrators;
pub mod model;
pub mod numerics;
pub mod verify;

pub use error::{Error, Result};
