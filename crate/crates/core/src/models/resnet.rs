use rand::Rng;

use super::layers::{BasicBlock, Block, BlockConfig, Bottleneck, ConvBn, Linear};
use super::spec::ModelSpec;
use crate::autograd::{Graph, Var};
use crate::error::{bail, Result};
use crate::kernels::Mode;
use crate::nn::{Binding, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Layer structure of a (PH)ResNet; tensors live in the owning [`Model`].
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub stem: ConvBn,
    pub stem_pool: bool,
    pub stages: Vec<Vec<Block>>,
    pub head: Linear,
}

impl Network {
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &Binding,
        buffers: &mut ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let mut h = self.stem.forward(g, bind, buffers, x, mode)?;
        h = g.relu(h)?;
        if self.stem_pool {
            h = g.max_pool2d(h, 3, 2, 1)?;
        }
        for stage in &self.stages {
            for block in stage {
                h = block.forward(g, bind, buffers, h, mode)?;
            }
        }
        let pooled = g.global_avg_pool(h)?;
        self.head.forward(g, bind, pooled)
    }
}

/// A built network together with its parameters and batch-norm buffers.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub spec: ModelSpec,
    pub network: Network,
    pub params: ParamStore<T>,
    pub buffers: ParamStore<T>,
}

/// Builds the network described by `spec`, drawing initial values from `rng`.
///
/// Every convolution is a PHC layer with the spec's `n` (a plain real
/// convolution when `n = 1`); the head is a real linear layer.
pub fn build_model<T: Scalar>(spec: &ModelSpec, rng: &mut impl Rng) -> Result<Model<T>> {
    let spec = spec.clone().resolved();
    spec.validate()?;
    let n = spec.n;
    let mut params = ParamStore::new();
    let mut buffers = ParamStore::new();
    let stem_width = spec.stage_widths[0];
    let stem = ConvBn::new(
        &mut params,
        &mut buffers,
        "stem",
        n,
        spec.in_channels,
        stem_width,
        spec.stem.kernel,
        spec.stem.stride,
        rng,
    )?;
    let expansion = spec.expansion();
    let mut channels = stem_width;
    let mut stages = Vec::with_capacity(spec.stage_widths.len());
    for (s, (&width, &blocks)) in spec.stage_widths.iter().zip(&spec.blocks_per_stage).enumerate() {
        let mut stage = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let stride = if s > 0 && b == 0 { 2 } else { 1 };
            let cfg = BlockConfig::auto(n, channels, width, stride, expansion);
            let name = format!("stage{}.block{}", s + 1, b);
            let block = if spec.depth.uses_bottleneck() {
                Block::Bottleneck(Bottleneck::new(&mut params, &mut buffers, &name, cfg, rng)?)
            } else {
                Block::Basic(BasicBlock::new(&mut params, &mut buffers, &name, cfg, rng)?)
            };
            stage.push(block);
            channels = width * expansion;
        }
        stages.push(stage);
    }
    let head = Linear::new(&mut params, "head", channels, spec.num_classes, rng);
    let network = Network { stem, stem_pool: spec.stem.max_pool, stages, head };
    Ok(Model { spec, network, params, buffers })
}

/// Learnable scalars of a model: algebra matrices, filters, biases,
/// batch-norm affine terms and the head. Running statistics are excluded.
pub fn count_params<T: Scalar>(model: &Model<T>) -> usize {
    model.params.numel()
}

impl<T: Scalar> Model<T> {
    pub fn build(spec: &ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        build_model(spec, rng)
    }

    pub fn count_params(&self) -> usize {
        self.params.numel()
    }

    /// Records a forward pass; returns `[N, K, 1, 1]` logits and the binding
    /// through which parameter gradients can be read after `backward`.
    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<(Var, Binding)> {
        let channels = g.shape(x).c();
        if channels != self.spec.in_channels {
            bail!(
                Dimension,
                "model expects {} input channels, got {}",
                self.spec.in_channels,
                g.shape(x)
            );
        }
        let bind = self.params.bind(g);
        let logits = self.network.forward(g, &bind, &mut self.buffers, x, mode)?;
        Ok((logits, bind))
    }

    /// Eval-mode logits without gradient tracking.
    pub fn logits(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bind = self.params.bind_frozen(&mut g);
        let xv = g.constant(x.clone());
        if x.shape().c() != self.spec.in_channels {
            bail!(Dimension, "model expects {} input channels, got {}", self.spec.in_channels, x.shape());
        }
        let out = self.network.forward(&mut g, &bind, &mut self.buffers, xv, Mode::Eval)?;
        Ok(g.value(out).clone())
    }
}
