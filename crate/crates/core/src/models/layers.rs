use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::error::{bail, Result};
use crate::hypercomplex::{PhcConfig, PhcLayer};
use crate::kernels::{BatchNormConfig, Mode};
use crate::nn::{Binding, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Batch norm with learnable affine terms and running statistics stored as
/// one `[2, C, 1, 1]` buffer (means, then variances).
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: ParamId,
    pub config: BatchNormConfig,
}

impl BatchNorm {
    pub fn new<T: Scalar>(
        params: &mut ParamStore<T>,
        buffers: &mut ParamStore<T>,
        name: &str,
        channels: usize,
    ) -> Self {
        let gamma = params.add(format!("{name}.gamma"), Tensor::ones(Shape::vector(channels)));
        let beta = params.add(format!("{name}.beta"), Tensor::zeros(Shape::vector(channels)));
        let mut stats = Tensor::zeros([2, channels, 1, 1]);
        stats.data_mut()[channels..].fill(T::one());
        let stats = buffers.add(format!("{name}.running"), stats);
        BatchNorm { channels, gamma, beta, stats, config: BatchNormConfig::default() }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &Binding,
        buffers: &mut ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let (mean, var) = buffers.get_mut(self.stats).data_mut().split_at_mut(self.channels);
        g.batch_norm(x, bind.var(self.gamma), bind.var(self.beta), mean, var, mode, self.config)
    }
}

/// A PHC convolution followed by batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBn {
    pub conv: PhcLayer,
    pub bn: BatchNorm,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        params: &mut ParamStore<T>,
        buffers: &mut ParamStore<T>,
        name: &str,
        n: usize,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let cfg = PhcConfig::new(n, cin, cout, kernel)
            .stride(stride)
            .padding(kernel / 2)
            .algebra(n > 1);
        let conv = PhcLayer::new(params, &format!("{name}.conv"), cfg, rng)?;
        let bn = BatchNorm::new(params, buffers, &format!("{name}.bn"), cout);
        Ok(ConvBn { conv, bn })
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &Binding,
        buffers: &mut ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let y = self.conv.forward(g, bind, x)?;
        self.bn.forward(g, bind, buffers, y, mode)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockConfig {
    pub n: usize,
    pub in_channels: usize,
    /// Base width; the block emits `width · expansion` channels.
    pub width: usize,
    pub stride: usize,
    pub projection: bool,
}

impl BlockConfig {
    /// Chooses a projection shortcut exactly when the identity cannot match.
    pub fn auto(n: usize, in_channels: usize, width: usize, stride: usize, expansion: usize) -> Self {
        let projection = stride != 1 || in_channels != width * expansion;
        BlockConfig { n, in_channels, width, stride, projection }
    }

    fn check_shortcut(&self, out_channels: usize) -> Result<()> {
        if !self.projection && (self.stride != 1 || self.in_channels != out_channels) {
            bail!(
                Config,
                "identity shortcut cannot map {} channels (stride {}) to {out_channels}",
                self.in_channels,
                self.stride
            );
        }
        Ok(())
    }
}

/// Two 3×3 PHC convolutions: `y = ReLU(BN(PHC(ReLU(BN(PHC(x))))) + shortcut(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasicBlock {
    pub conv1: ConvBn,
    pub conv2: ConvBn,
    pub shortcut: Option<ConvBn>,
}

impl BasicBlock {
    pub fn new<T: Scalar>(
        params: &mut ParamStore<T>,
        buffers: &mut ParamStore<T>,
        name: &str,
        cfg: BlockConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.check_shortcut(cfg.width)?;
        let BlockConfig { n, in_channels: cin, width, stride, .. } = cfg;
        let conv1 = ConvBn::new(params, buffers, &format!("{name}.conv1"), n, cin, width, 3, stride, rng)?;
        let conv2 = ConvBn::new(params, buffers, &format!("{name}.conv2"), n, width, width, 3, 1, rng)?;
        let shortcut = if cfg.projection {
            Some(ConvBn::new(params, buffers, &format!("{name}.shortcut"), n, cin, width, 1, stride, rng)?)
        } else {
            None
        };
        Ok(BasicBlock { conv1, conv2, shortcut })
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &Binding,
        buffers: &mut ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let h = self.conv1.forward(g, bind, buffers, x, mode)?;
        let h = g.relu(h)?;
        let f = self.conv2.forward(g, bind, buffers, h, mode)?;
        let s = match &self.shortcut {
            Some(p) => p.forward(g, bind, buffers, x, mode)?,
            None => x,
        };
        let y = g.add(f, s)?;
        g.relu(y)
    }
}

/// 1×1 reduce, 3×3 (strided), 1×1 expand by [`BOTTLENECK_EXPANSION`](super::BOTTLENECK_EXPANSION).
#[derive(Clone, Debug, PartialEq)]
pub struct Bottleneck {
    pub conv1: ConvBn,
    pub conv2: ConvBn,
    pub conv3: ConvBn,
    pub shortcut: Option<ConvBn>,
}

impl Bottleneck {
    pub fn new<T: Scalar>(
        params: &mut ParamStore<T>,
        buffers: &mut ParamStore<T>,
        name: &str,
        cfg: BlockConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let out = cfg.width * super::BOTTLENECK_EXPANSION;
        cfg.check_shortcut(out)?;
        let BlockConfig { n, in_channels: cin, width, stride, .. } = cfg;
        let conv1 = ConvBn::new(params, buffers, &format!("{name}.conv1"), n, cin, width, 1, 1, rng)?;
        let conv2 = ConvBn::new(params, buffers, &format!("{name}.conv2"), n, width, width, 3, stride, rng)?;
        let conv3 = ConvBn::new(params, buffers, &format!("{name}.conv3"), n, width, out, 1, 1, rng)?;
        let shortcut = if cfg.projection {
            Some(ConvBn::new(params, buffers, &format!("{name}.shortcut"), n, cin, out, 1, stride, rng)?)
        } else {
            None
        };
        Ok(Bottleneck { conv1, conv2, conv3, shortcut })
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &Binding,
        buffers: &mut ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let h = self.conv1.forward(g, bind, buffers, x, mode)?;
        let h = g.relu(h)?;
        let h = self.conv2.forward(g, bind, buffers, h, mode)?;
        let h = g.relu(h)?;
        let f = self.conv3.forward(g, bind, buffers, h, mode)?;
        let s = match &self.shortcut {
            Some(p) => p.forward(g, bind, buffers, x, mode)?,
            None => x,
        };
        let y = g.add(f, s)?;
        g.relu(y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Block {
    Basic(BasicBlock),
    Bottleneck(Bottleneck),
}

impl Block {
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &Binding,
        buffers: &mut ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        match self {
            Block::Basic(b) => b.forward(g, bind, buffers, x, mode),
            Block::Bottleneck(b) => b.forward(g, bind, buffers, x, mode),
        }
    }
}

/// Real-valued fully connected layer, `[K, D, 1, 1]` weight and `[K]` bias,
/// PyTorch-style uniform init with bound `1/√D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(
        params: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = params.add(format!("{name}.weight"), Tensor::uniform([outputs, inputs, 1, 1], bound, rng));
        let bias = params.add(format!("{name}.bias"), Tensor::uniform(Shape::vector(outputs), bound, rng));
        Linear { weight, bias }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding, x: Var) -> Result<Var> {
        g.linear(x, bind.var(self.weight), Some(bind.var(self.bias)))
    }
}
