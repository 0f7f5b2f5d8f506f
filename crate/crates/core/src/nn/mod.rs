//! Minimal CPU tensor and layer kernels with explicit backward passes.
//!
//! Everything is generic over [`Real`] so the same network can train in f32
//! and be gradient-checked in f64.

mod conv;
mod norm;
mod real;
mod tensor;

pub use conv::{Conv3d, ConvTranspose3d};
pub use norm::{instance_norm, instance_norm_backward, leaky_relu, leaky_relu_backward, IN_EPS, LEAKY_SLOPE};
pub use real::Real;
pub use tensor::{concat_channels, softmax_channels, split_channels, Tensor};
