//! Sparse regularization with the l0 "norm" solved by an inexact fixed-point
//! proximity scheme, alongside l1 baselines and an experiment harness for
//! kernel regression, kernel classification and image deblurring.
//!
//! The two-variable l0 model minimized here is
//!
//! ```text
//! F(u, v) = psi(B v) + (lambda / 2 gamma) ||u - D v||^2 + lambda ||u||_0
//! ```
//!
//! where `psi` is a smooth convex fidelity ([`fidelity::Fidelity`]), `B` and
//! `D` are linear operators ([`linops::LinearOp`]). See [`solver_l0`] for the
//! outer hard-thresholding step and the primal-dual inner loop, and
//! [`solver_l1`] for the convex l1 baselines.

// `!(x > 0.0)` is the NaN-rejecting form used for parameter checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data_io;
mod error;
pub mod fidelity;
pub mod linalg;
pub mod linops;
pub mod prox;
pub mod solver_l0;
pub mod solver_l1;

pub use error::{Error, Result};
