//! Parameterized hypercomplex convolutional networks conditioned on
//! attention maps.
//!
//! The crate is organized bottom-up:
//! - [`tensor`], [`kernels`], [`autograd`]: rank-4 tensors, numeric kernels
//!   and a reverse-mode tape;
//! - [`hypercomplex`]: quaternion convolution and PHC layers whose weight is
//!   a learned sum of Kronecker products;
//! - [`models`]: PH residual networks and the attention-pooling map producer;
//! - [`data`]: attention-map stacking, preprocessing, augmentation,
//!   synthetic corpora and manifests;
//! - [`train`] and [`metrics`]: Adam, early stopping, checkpoints, ROC/AUC.

pub mod autograd;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod hypercomplex;
pub mod kernels;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod verify;

pub use autograd::{Graph, Var};
pub use error::{Error, Result};
pub use scalar::{DType, Scalar};
pub use tensor::{Shape, Tensor};
