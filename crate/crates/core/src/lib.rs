//! Simultaneous plant and state-feedback design for Lipschitz nonlinear
//! systems `x' = A(d) x + B u + Phi(x) + B_w w`, `z = C x + D u`, `u = K x`.
//!
//! The closed-loop L2 cost is replaced by the trace bound `tr(B_w^T P B_w)`,
//! where `P` solves a quadratic matrix equation whose existence certifies
//! stability. The crate provides the dense solvers behind that certificate,
//! the plant model and coordinate transformation, initial controller
//! synthesis, the projected gradient descent and a fixed-step simulator to
//! check the result.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codesign;
pub mod error;
pub mod manipulator;
pub mod matrix_equations;
pub mod plant;
pub mod simulate;

pub use error::{Error, Result};
