//! A small convolutional trunk with a single-query attention-pooling head.
//! Its softmax weights over spatial positions, upsampled to the input
//! resolution, serve as attention maps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{ConvBn, Linear};
use crate::autograd::{Graph, Var};
use crate::error::{bail, Result};
use crate::hypercomplex::{PhcConfig, PhcLayer};
use crate::kernels::resample::resize_bilinear;
use crate::kernels::Mode;
use crate::nn::{Binding, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionPoolSpec {
    pub in_channels: usize,
    pub width: usize,
    pub key_dim: usize,
    pub num_classes: usize,
}

impl Default for AttentionPoolSpec {
    fn default() -> Self {
        AttentionPoolSpec { in_channels: 1, width: 16, key_dim: 16, num_classes: 2 }
    }
}

/// Patch projection, learned query and classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionPoolHead {
    pub projection: PhcLayer,
    pub query: ParamId,
    pub classifier: Linear,
}

impl AttentionPoolHead {
    pub fn new<T: Scalar>(
        params: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        key_dim: usize,
        num_classes: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let cfg = PhcConfig::new(1, channels, key_dim, 1).algebra(false).bias(true);
        let projection = PhcLayer::new(params, &format!("{name}.projection"), cfg, rng)?;
        let bound = 1.0 / (key_dim as f64).sqrt();
        let query = params.add(format!("{name}.query"), Tensor::uniform([1, key_dim, 1, 1], bound, rng));
        let classifier = Linear::new(params, &format!("{name}.classifier"), key_dim, num_classes, rng);
        Ok(AttentionPoolHead { projection, query, classifier })
    }

    /// Returns `[N, K, 1, 1]` logits and `[N, 1, h, w]` attention weights
    /// that sum to one over the positions of each sample.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding, features: Var) -> Result<(Var, Var)> {
        let keys = self.projection.forward(g, bind, features)?;
        let scores = g.conv2d(keys, bind.var(self.query), None, self.projection.geometry())?;
        let weights = g.spatial_softmax(scores)?;
        let pooled = g.attention_sum(weights, keys)?;
        let logits = self.classifier.forward(g, bind, pooled)?;
        Ok((logits, weights))
    }
}

/// Rescales every plane to `[0, 1]` by min-max; a constant plane maps to 1.
pub fn rescale_attention<T: Scalar>(maps: &mut Tensor<T>) {
    let plane = maps.shape().plane();
    for p in maps.data_mut().chunks_exact_mut(plane) {
        let lo = p.iter().copied().fold(T::infinity(), T::min);
        let hi = p.iter().copied().fold(T::neg_infinity(), T::max);
        let range = hi - lo;
        if range <= T::epsilon() * hi.abs().max(T::one()) {
            p.fill(T::one());
        } else {
            p.iter_mut().for_each(|v| *v = (*v - lo) / range);
        }
    }
}

#[derive(Clone, Debug)]
pub struct AttentionPoolModel<T> {
    pub spec: AttentionPoolSpec,
    pub trunk: Vec<ConvBn>,
    pub head: AttentionPoolHead,
    pub params: ParamStore<T>,
    pub buffers: ParamStore<T>,
}

impl<T: Scalar> AttentionPoolModel<T> {
    pub fn build(spec: &AttentionPoolSpec, rng: &mut impl Rng) -> Result<Self> {
        if spec.in_channels == 0 || spec.width == 0 || spec.key_dim == 0 || spec.num_classes < 2 {
            bail!(Config, "degenerate attention-pool spec {spec:?}");
        }
        let mut params = ParamStore::new();
        let mut buffers = ParamStore::new();
        let w = spec.width;
        let trunk = vec![
            ConvBn::new(&mut params, &mut buffers, "trunk0", 1, spec.in_channels, w, 3, 2, rng)?,
            ConvBn::new(&mut params, &mut buffers, "trunk1", 1, w, w, 3, 1, rng)?,
        ];
        let head = AttentionPoolHead::new(&mut params, "head", w, spec.key_dim, spec.num_classes, rng)?;
        Ok(AttentionPoolModel { spec: spec.clone(), trunk, head, params, buffers })
    }

    fn run(&mut self, g: &mut Graph<T>, bind: &Binding, x: Var, mode: Mode) -> Result<(Var, Var)> {
        if g.shape(x).c() != self.spec.in_channels {
            bail!(Dimension, "producer expects {} channels, got {}", self.spec.in_channels, g.shape(x));
        }
        let mut h = x;
        for layer in &self.trunk {
            h = layer.forward(g, bind, &mut self.buffers, h, mode)?;
            h = g.relu(h)?;
        }
        self.head.forward(g, bind, h)
    }

    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<(Var, Binding)> {
        let bind = self.params.bind(g);
        let (logits, _) = self.run(g, &bind, x, mode)?;
        Ok((logits, bind))
    }

    pub fn logits(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.attend(x)?.0)
    }

    /// Eval-mode logits and `[N, 1, H, W]` attention maps in `[0, 1]` at the
    /// input resolution.
    pub fn attend(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut g = Graph::new();
        let bind = self.params.bind_frozen(&mut g);
        let xv = g.constant(x.clone());
        let (logits, weights) = self.run(&mut g, &bind, xv, Mode::Eval)?;
        let s = x.shape();
        let mut maps = resize_bilinear(g.value(weights), s.h(), s.w());
        rescale_attention(&mut maps);
        Ok((g.value(logits).clone(), maps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn head_only(channels: usize) -> (ParamStore<f64>, AttentionPoolHead) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let head = AttentionPoolHead::new(&mut store, "h", channels, channels, 2, &mut rng).unwrap();
        // identity projection, zero bias, query = e0
        *store.get_mut(head.projection.filters) =
            Tensor::from_fn([channels, channels, 1, 1], |[o, i, _, _]| if o == i { 1.0 } else { 0.0 });
        *store.get_mut(head.projection.bias.unwrap()) = Tensor::zeros([channels, 1, 1, 1]);
        *store.get_mut(head.query) = Tensor::from_fn([1, channels, 1, 1], |[_, c, _, _]| if c == 0 { 1.0 } else { 0.0 });
        (store, head)
    }

    #[test]
    fn uniform_features_give_uniform_attention() {
        let (store, head) = head_only(3);
        let mut g = Graph::new();
        let bind = store.bind_frozen(&mut g);
        let x = g.constant(Tensor::full([2, 3, 4, 5], 0.7));
        let (_, w) = head.forward(&mut g, &bind, x).unwrap();
        for p in g.value(w).data().chunks_exact(20) {
            let s: f64 = p.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| (v - 0.05).abs() < 1e-15));
        }
    }

    #[test]
    fn dominant_key_takes_the_mass() {
        let (store, head) = head_only(2);
        let mut feats = Tensor::<f64>::zeros([1, 2, 4, 4]);
        let hot: f64 = 6.0;
        *feats.at_mut(0, 0, 2, 1) = hot;
        // logits are 6 at one position and 0 at 15 others
        let expected = hot.exp() / (hot.exp() + 15.0);
        assert!(expected > 0.9);
        let mut g = Graph::new();
        let bind = store.bind_frozen(&mut g);
        let x = g.constant(feats);
        let (_, w) = head.forward(&mut g, &bind, x).unwrap();
        let got = g.value(w).at(0, 0, 2, 1);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn maps_are_unit_range_with_unit_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut model = AttentionPoolModel::<f64>::build(&AttentionPoolSpec::default(), &mut rng).unwrap();
        let x = Tensor::randn([3, 1, 16, 16], &mut rng);
        let (logits, maps) = model.attend(&x).unwrap();
        assert_eq!(logits.shape().0, [3, 2, 1, 1]);
        assert_eq!(maps.shape().0, [3, 1, 16, 16]);
        for p in maps.data().chunks_exact(256) {
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert_eq!(p.iter().copied().fold(0.0, f64::max), 1.0);
        }
    }
}
