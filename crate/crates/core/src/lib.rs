//! Null and bilinear trajectory controls for degenerate parabolic equations
//! posed on a moving interval `(0, ℓ(t))`.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carleman;
pub mod control_linear;
pub mod control_nonlinear;
pub mod disc;
pub mod error;
pub mod interp;
pub mod model;
pub mod quad;
pub mod transform;

pub use error::{Error, Result};
