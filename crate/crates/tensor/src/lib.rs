//! Dense row-major arrays with tape-based reverse-mode differentiation.
//!
//! [`Tensor`] is an immutable buffer plus shape. [`Var`] wraps a tensor and,
//! when it descends from a leaf of a [`Tape`], records every primitive
//! applied to it so [`Tape::backward`] can produce leaf gradients.

pub mod alloc;
mod element;
mod error;
pub mod fft;
pub mod gradcheck;
pub mod instrument;
pub mod kernels;
pub mod ops;
mod tape;
mod tensor;

pub use element::{DType, Element};
pub use error::{Error, Result};
pub use tape::{record, Adjoint, Gradients, Tape, Var};
pub use tensor::{numel, strides, Tensor};
