//! Dense rank-4 `f32` tensors with reverse-mode differentiation.
//!
//! Storage is 32-bit; reductions and kernel accumulation run in 64-bit.
//! The operator set is deliberately narrow: plain, grouped, transposed,
//! deformable and dynamic convolutions, pooling, resampling, instance
//! normalization, activations, affine modulation and an L1 loss.

pub mod dump;
mod error;
pub mod gradcheck;
mod kernels;
pub mod ops;
mod tensor;

pub use error::{Result, TensorError};
pub use ops::activation::{leaky_relu, relu, upsample, UpsampleMode, DEFAULT_LEAKY_SLOPE};
pub use ops::conv::{conv2d, depthwise_conv2d, transposed_conv2d, ConvSpec};
pub use ops::deform::{deformable_conv2d, offset_channels, OffsetField};
pub use ops::dynamic::dynamic_conv2d;
pub use ops::elementwise::{
    add, add_scalar, clamp, concat_batch, concat_channels, mean, modulate, mul, narrow_channels, reshape, scale, sub,
    sum, weighted_sum,
};
pub use ops::loss::l1_loss;
pub use ops::norm::{normalize, NORM_EPS};
pub use ops::pool::{pool_avg, pool_global};
pub use tensor::{numel, Shape, Tensor};
