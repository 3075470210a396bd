//! Value-level numeric kernels shared by the tape and by forward-only paths.

pub mod conv;
pub mod norm;
pub(crate) mod pool;
pub mod resample;

pub use conv::{conv2d, conv_output_shape, ConvGeometry};
pub use norm::{BatchNormConfig, Mode};
