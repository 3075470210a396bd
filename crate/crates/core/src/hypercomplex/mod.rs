//! Quaternion algebra, quaternion convolution and parameterized
//! hypercomplex (PHC) layers.

pub mod phc;
pub mod qconv;
pub mod quaternion;

pub use phc::{
    complex_algebra, hamilton_algebra, kron_sum, natural_algebra, real_algebra, PhcConfig, PhcLayer,
};
pub use qconv::{quaternion_block_weight, quaternion_conv2d};
pub use quaternion::{hamilton_product, Quaternion};
