//! Minimal reverse-mode differentiation engine.
//!
//! Operations are recorded eagerly on a [`Tape`]; values are computed at
//! record time and gradients by replaying the tape in reverse. Storage is
//! float32 with float64 accumulators inside every reduction, and all
//! reduction orders are fixed left-to-right, so identical seeds and inputs
//! produce bit-identical forward values and gradients.

mod adam;
mod gradcheck;
mod kernels;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_update, AdamState};
pub use gradcheck::{compare_with_fd, grad_check, GradCheckReport};
pub use params::ParamStore;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
