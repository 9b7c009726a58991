//! Discrete quasistatic brittle fracture in two dimensions.
//!
//! The crate evolves a cracked elastic body under a time-dependent Dirichlet
//! loading through a sequence of incremental global minimizations. Two models
//! share one discretization:
//!
//! * a nonlinear, frame-indifferent model with a second-gradient term weighted
//!   by `eps^(-2 beta)` and surface energy charged on the union of displacement
//!   and gradient jumps, and
//! * its small-strain Griffith counterpart with energy `1/2 Q(e(u))`.
//!
//! The geometry is a structured grid of square cells over a rectangle whose
//! outer rings form the Dirichlet frame. Cracks are sets of broken cell
//! interfaces; across a broken interface corner degrees of freedom are
//! duplicated, so both the field and its gradient may jump there.
//!
//! [`linearize`] post-processes nonlinear runs into rescaled displacements and
//! compares them to linear runs, and [`harness`] wires everything into
//! configuration files, scenarios, the `fraclin` binary and the acceptance
//! checks.

// NaN-rejecting `!(x > 0.0)` tests and index loops over parallel arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod crack;
pub mod energy;
mod error;
pub mod harness;
pub mod linearize;
pub mod mesh;
pub mod solver;

pub use error::{Error, Result};
