//! PH residual networks and the attention-pooling map producer.

pub mod attention;
pub mod layers;
pub mod resnet;
pub mod spec;

pub use attention::{AttentionPoolHead, AttentionPoolModel, AttentionPoolSpec};
pub use layers::{BasicBlock, BatchNorm, Block, BlockConfig, Bottleneck, ConvBn, Linear};
pub use resnet::{build_model, count_params, Model, Network};
pub use spec::{Depth, ModelSpec, StemSpec, BOTTLENECK_EXPANSION};

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::kernels::Mode;
use crate::nn::{Binding, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// What the trainer needs from a model.
pub trait Classifier<T: Scalar> {
    /// Tracked forward pass returning `[N, K, 1, 1]` logits.
    fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<(Var, Binding)>;
    /// Eval-mode logits without gradient tracking.
    fn logits(&mut self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn params(&self) -> &ParamStore<T>;
    fn params_mut(&mut self) -> &mut ParamStore<T>;
    fn buffers(&self) -> &ParamStore<T>;
    fn buffers_mut(&mut self) -> &mut ParamStore<T>;

    /// Softmax probability of class 1 per sample.
    fn positive_probability(&mut self, x: &Tensor<T>) -> Result<Vec<f64>> {
        let logits = self.logits(x)?;
        let k = logits.shape().sample_len();
        Ok(logits
            .data()
            .chunks_exact(k)
            .map(|row| {
                let row: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
                (row[1] - max).exp() / z
            })
            .collect())
    }
}

macro_rules! classifier_impl {
    ($ty:ident) => {
        impl<T: Scalar> Classifier<T> for $ty<T> {
            fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<(Var, Binding)> {
                $ty::forward(self, g, x, mode)
            }
            fn logits(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
                $ty::logits(self, x)
            }
            fn params(&self) -> &ParamStore<T> {
                &self.params
            }
            fn params_mut(&mut self) -> &mut ParamStore<T> {
                &mut self.params
            }
            fn buffers(&self) -> &ParamStore<T> {
                &self.buffers
            }
            fn buffers_mut(&mut self) -> &mut ParamStore<T> {
                &mut self.buffers
            }
        }
    };
}

classifier_impl!(Model);
classifier_impl!(AttentionPoolModel);
