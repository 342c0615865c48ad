//! Minimal differentiable numeric kernel.
//!
//! Forward kernels live in [`ops`]; [`Tape`] records them and applies the
//! matching backward rules; [`grad_check`] validates those rules with
//! central differences.

mod array;
mod gradcheck;
pub(crate) mod linalg;
pub mod ops;
mod real;
mod tape;

pub use array::NumArray;
pub use gradcheck::{grad_check, relative_error, BlockReport, GradCheckOptions, GradCheckReport};
pub use ops::{Activation, Mode};
pub use real::Real;
pub use tape::{Gradients, LossForm, Tape, Var, NORM_EPSILON};

pub(crate) use tape::{adjust_length, ns_loss_value};
