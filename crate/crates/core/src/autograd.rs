//! Reverse-mode differentiation over an append-only tape.
//!
//! Every operation pushes a node holding its output value and whatever the
//! backward rule needs. Nodes only reference earlier nodes, so walking the
//! tape backwards is a valid reverse-topological order.

use crate::error::{bail, Result};
use crate::hypercomplex::phc::{kron_sum, kron_sum_backward};
use crate::kernels::conv::{self, conv2d_backward, ConvGeometry};
use crate::kernels::norm::{batch_norm_backward, batch_norm_forward, BatchNormConfig, BnSaved, Mode};
use crate::kernels::pool;
use crate::scalar::{gemm, Mat, Scalar};
use crate::tensor::{Shape, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Relu(Var),
    Conv2d { input: Var, weight: Var, bias: Option<Var>, geom: ConvGeometry },
    BatchNorm { input: Var, gamma: Var, beta: Var, saved: BnSaved<T>, mode: Mode },
    MaxPool { input: Var, argmax: Vec<usize> },
    GlobalAvgPool(Var),
    Linear { input: Var, weight: Var, bias: Option<Var> },
    KronSum { algebra: Var, filters: Var, n: usize },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<T> },
    SpatialSoftmax(Var),
    AttentionSum { weights: Var, features: Var },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var], name: &str) -> Result<Var> {
        if cfg!(debug_assertions) && !value.all_finite() {
            bail!(NonFinite, "{name} produced a non-finite value (output shape {})", value.shape());
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, grad: None, requires_grad, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant input; no gradient is tracked.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, grad: None, requires_grad: false, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// A leaf whose gradient is populated by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, grad: None, requires_grad: true, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            bail!(Dimension, "add of {} and {}", x.shape(), y.shape());
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| *p + *q).collect();
        let out = Tensor::from_vec(x.shape(), data)?;
        self.push(out, Op::Add(a, b), &[a, b], "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            bail!(Dimension, "mul of {} and {}", x.shape(), y.shape());
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| *p * *q).collect();
        let out = Tensor::from_vec(x.shape(), data)?;
        self.push(out, Op::Mul(a, b), &[a, b], "mul")
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var> {
        let out = self.value(a).map(|v| v * factor);
        self.push(out, Op::Scale(a, factor), &[a], "scale")
    }

    /// Sum of all elements as a `[1, 1, 1, 1]` scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a], "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        let s = self.sum(a)?;
        self.scale(s, T::one() / T::of(n as f64))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(out, Op::Relu(a), &[a], "relu")
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    ) -> Result<Var> {
        let out = conv::conv2d(self.value(input), self.value(weight), bias.map(|b| self.value(b)), geom)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push(out, Op::Conv2d { input, weight, bias, geom }, &inputs, "conv2d")
    }

    /// Batch normalization. In train mode the running statistics are updated
    /// in place with the configured momentum.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running_mean: &mut [T],
        running_var: &mut [T],
        mode: Mode,
        cfg: BatchNormConfig,
    ) -> Result<Var> {
        let channels = self.shape(input).c();
        for (what, len) in [
            ("gamma", self.value(gamma).numel()),
            ("beta", self.value(beta).numel()),
            ("running mean", running_mean.len()),
            ("running var", running_var.len()),
        ] {
            if len != channels {
                bail!(Dimension, "batch_norm {what} has {len} entries for {channels} channels");
            }
        }
        let (out, saved) = batch_norm_forward(
            self.value(input),
            self.value(gamma).data(),
            self.value(beta).data(),
            running_mean,
            running_var,
            mode,
            cfg,
        );
        self.push(out, Op::BatchNorm { input, gamma, beta, saved, mode }, &[input, gamma, beta], "batch_norm")
    }

    pub fn max_pool2d(&mut self, input: Var, kernel: usize, stride: usize, padding: usize) -> Result<Var> {
        let (out, argmax) = pool::max_pool2d(self.value(input), kernel, stride, padding)?;
        self.push(out, Op::MaxPool { input, argmax }, &[input], "max_pool2d")
    }

    /// `[N, C, H, W] -> [N, C, 1, 1]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let out = pool::global_avg_pool(self.value(input));
        self.push(out, Op::GlobalAvgPool(input), &[input], "global_avg_pool")
    }

    /// Fully connected layer over the flattened `C·H·W` features of each
    /// sample. `weight` is `[K, D, 1, 1]`, `bias` is `[K, 1, 1, 1]`; the
    /// result is `[N, K, 1, 1]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (x, w) = (self.value(input), self.value(weight));
        let (n, d) = (x.shape().n(), x.shape().sample_len());
        let k = w.shape().n();
        if w.shape().sample_len() != d {
            bail!(Dimension, "linear input {} does not match weight {}", x.shape(), w.shape());
        }
        let mut out = vec![T::zero(); n * k];
        gemm(Mat::new(x.data(), n, d), Mat::t(w.data(), k, d), T::zero(), &mut out);
        if let Some(b) = bias {
            let b = self.value(b);
            if b.numel() != k {
                bail!(Dimension, "linear bias {} does not match {k} outputs", b.shape());
            }
            for row in out.chunks_exact_mut(k) {
                row.iter_mut().zip(b.data()).for_each(|(o, bv)| *o += *bv);
            }
        }
        let out = Tensor::from_vec([n, k, 1, 1], out)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push(out, Op::Linear { input, weight, bias }, &inputs, "linear")
    }

    /// Sum of Kronecker products `Σᵢ Aᵢ ⊗ Fᵢ`; see
    /// [`kron_sum`](crate::hypercomplex::phc::kron_sum) for the layouts.
    pub fn kron_sum(&mut self, algebra: Var, filters: Var, n: usize) -> Result<Var> {
        let out = kron_sum(self.value(algebra), self.value(filters), n)?;
        self.push(out, Op::KronSum { algebra, filters, n }, &[algebra, filters], "kron_sum")
    }

    /// Mean softmax cross-entropy of `[N, K, 1, 1]` logits.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let (n, k) = (x.shape().n(), x.shape().sample_len());
        if labels.len() != n {
            bail!(Dimension, "{} labels for batch of {n}", labels.len());
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            bail!(Input, "label {bad} out of range for {k} classes");
        }
        let mut probs = vec![T::zero(); n * k];
        let mut loss = T::zero();
        for (i, row) in x.data().chunks_exact(k).enumerate() {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let p = &mut probs[i * k..(i + 1) * k];
            let mut z = T::zero();
            for (pj, &v) in p.iter_mut().zip(row) {
                *pj = (v - max).exp();
                z += *pj;
            }
            p.iter_mut().for_each(|v| *v /= z);
            loss += z.ln() + max - row[labels[i]];
        }
        let out = Tensor::scalar(loss / T::of(n as f64));
        let op = Op::CrossEntropy { logits, labels: labels.to_vec(), probs };
        self.push(out, op, &[logits], "cross_entropy")
    }

    /// Softmax over the spatial positions of every `(sample, channel)` plane.
    pub fn spatial_softmax(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let plane = x.shape().plane();
        let mut out = x.clone();
        for p in out.data_mut().chunks_exact_mut(plane) {
            let max = p.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for v in p.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            p.iter_mut().for_each(|v| *v /= z);
        }
        self.push(out, Op::SpatialSoftmax(input), &[input], "spatial_softmax")
    }

    /// Attention-weighted spatial sum: `[N,1,H,W] × [N,C,H,W] -> [N,C,1,1]`.
    pub fn attention_sum(&mut self, weights: Var, features: Var) -> Result<Var> {
        let (a, f) = (self.value(weights), self.value(features));
        let (sa, sf) = (a.shape(), f.shape());
        if sa.c() != 1 || sa.n() != sf.n() || sa.plane() != sf.plane() {
            bail!(Dimension, "attention weights {sa} do not fit features {sf}");
        }
        let plane = sf.plane();
        let mut out = vec![T::zero(); sf.n() * sf.c()];
        for n in 0..sf.n() {
            let w = &a.data()[n * plane..(n + 1) * plane];
            for c in 0..sf.c() {
                let feat = &f.data()[(n * sf.c() + c) * plane..][..plane];
                out[n * sf.c() + c] = w.iter().zip(feat).map(|(p, q)| *p * *q).sum();
            }
        }
        let out = Tensor::from_vec([sf.n(), sf.c(), 1, 1], out)?;
        self.push(out, Op::AttentionSum { weights, features }, &[weights, features], "attention_sum")
    }

    /// Populates gradients of every tracked node reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape.numel() != 1 {
            bail!(Contract, "backward needs a scalar loss, got shape {shape}");
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::full(shape, T::one()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(gout) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(i, &gout);
            self.nodes[i].grad = Some(gout);
            for (var, g) in contributions {
                let node = &mut self.nodes[var.0];
                if !node.requires_grad {
                    continue;
                }
                match node.grad.as_mut() {
                    Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += *b),
                    None => node.grad = Some(g),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn local_grads(&self, i: usize, gout: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let value = &self.nodes[i].value;
        let dy = gout.data();
        let like = |v: Var, data: Vec<T>| Tensor::from_vec(self.shape(v), data).unwrap();
        match &self.nodes[i].op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => vec![(*a, gout.clone()), (*b, gout.clone())],
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                let da = dy.iter().zip(y).map(|(g, q)| *g * *q).collect();
                let db = dy.iter().zip(x).map(|(g, p)| *g * *p).collect();
                vec![(*a, like(*a, da)), (*b, like(*b, db))]
            }
            Op::Scale(a, s) => vec![(*a, gout.map(|g| g * *s))],
            Op::Sum(a) => vec![(*a, Tensor::full(self.shape(*a), dy[0]))],
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let d = dy.iter().zip(x).map(|(g, v)| if *v > T::zero() { *g } else { T::zero() }).collect();
                vec![(*a, like(*a, d))]
            }
            Op::Conv2d { input, weight, bias, geom } => {
                let grads = conv2d_backward(
                    self.value(*input),
                    self.value(*weight),
                    gout,
                    *geom,
                    self.wants(*input),
                );
                let mut out = vec![(*weight, grads.weight)];
                if let Some(dx) = grads.input {
                    out.push((*input, dx));
                }
                if let Some(b) = bias {
                    out.push((*b, like(*b, grads.bias)));
                }
                out
            }
            Op::BatchNorm { input, gamma, beta, saved, mode } => {
                let g = batch_norm_backward(gout, self.value(*gamma).data(), saved, *mode);
                vec![
                    (*input, like(*input, g.input)),
                    (*gamma, like(*gamma, g.gamma)),
                    (*beta, like(*beta, g.beta)),
                ]
            }
            Op::MaxPool { input, argmax } => {
                let mut d = vec![T::zero(); self.value(*input).numel()];
                for (g, &at) in dy.iter().zip(argmax) {
                    d[at] += *g;
                }
                vec![(*input, like(*input, d))]
            }
            Op::GlobalAvgPool(a) => {
                let s = self.shape(*a);
                let scale = T::one() / T::of(s.plane() as f64);
                let mut d = Vec::with_capacity(s.numel());
                for g in dy {
                    d.extend(std::iter::repeat(*g * scale).take(s.plane()));
                }
                vec![(*a, like(*a, d))]
            }
            Op::Linear { input, weight, bias } => {
                let (x, w) = (self.value(*input), self.value(*weight));
                let (n, d) = (x.shape().n(), x.shape().sample_len());
                let k = w.shape().n();
                let mut out = Vec::new();
                if self.wants(*input) {
                    let mut dx = vec![T::zero(); n * d];
                    gemm(Mat::new(dy, n, k), Mat::new(w.data(), k, d), T::zero(), &mut dx);
                    out.push((*input, like(*input, dx)));
                }
                let mut dw = vec![T::zero(); k * d];
                gemm(Mat::t(dy, n, k), Mat::new(x.data(), n, d), T::zero(), &mut dw);
                out.push((*weight, like(*weight, dw)));
                if let Some(b) = bias {
                    let mut db = vec![T::zero(); k];
                    for row in dy.chunks_exact(k) {
                        db.iter_mut().zip(row).for_each(|(a, g)| *a += *g);
                    }
                    out.push((*b, like(*b, db)));
                }
                out
            }
            Op::KronSum { algebra, filters, n } => {
                let (da, df) = kron_sum_backward(self.value(*algebra), self.value(*filters), gout, *n);
                vec![(*algebra, da), (*filters, df)]
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let k = self.shape(*logits).sample_len();
                let scale = dy[0] / T::of(labels.len() as f64);
                let mut d: Vec<T> = probs.iter().map(|p| *p * scale).collect();
                for (row, &l) in labels.iter().enumerate() {
                    d[row * k + l] -= scale;
                }
                vec![(*logits, like(*logits, d))]
            }
            Op::SpatialSoftmax(a) => {
                let plane = value.shape().plane();
                let mut d = vec![T::zero(); value.numel()];
                for ((dp, yp), gp) in d
                    .chunks_exact_mut(plane)
                    .zip(value.data().chunks_exact(plane))
                    .zip(dy.chunks_exact(plane))
                {
                    let dot: T = yp.iter().zip(gp).map(|(y, g)| *y * *g).sum();
                    for ((o, y), g) in dp.iter_mut().zip(yp).zip(gp) {
                        *o = *y * (*g - dot);
                    }
                }
                vec![(*a, like(*a, d))]
            }
            Op::AttentionSum { weights, features } => {
                let (a, f) = (self.value(*weights), self.value(*features));
                let sf = f.shape();
                let (c, plane) = (sf.c(), sf.plane());
                let mut da = vec![T::zero(); a.numel()];
                let mut df = vec![T::zero(); f.numel()];
                for n in 0..sf.n() {
                    let w = &a.data()[n * plane..(n + 1) * plane];
                    for ch in 0..c {
                        let g = dy[n * c + ch];
                        let base = (n * c + ch) * plane;
                        let feat = &f.data()[base..base + plane];
                        for p in 0..plane {
                            da[n * plane + p] += g * feat[p];
                            df[base + p] = g * w[p];
                        }
                    }
                }
                vec![(*weights, like(*weights, da)), (*features, like(*features, df))]
            }
        }
    }
}
