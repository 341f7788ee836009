//! Differentiable primitives, implemented as methods on [`Var`](crate::Var).

mod conv;
mod elementwise;
mod linalg;
mod nn;
mod reduce;
mod shape;

pub use conv::{depthwise_conv_flops, fft_conv_flops};
pub use elementwise::{mul_tensors, sigmoid, softplus};
