//! Self-checks of the numerical core, runnable from the command line.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::{check_gradients, GradCheckConfig};
use crate::hypercomplex::{
    hamilton_algebra, hamilton_product, kron_sum, quaternion_conv2d, PhcConfig, PhcLayer, Quaternion,
};
use crate::kernels::{conv2d, BatchNormConfig, ConvGeometry, Mode};
use crate::metrics::roc_auc;
use crate::models::{BasicBlock, BlockConfig, Model, ModelSpec};
use crate::nn::ParamStore;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn(u64) -> Result<(bool, String)>;

pub const CHECKS: &[(&str, Check)] = &[
    ("hamilton_algebra_laws", hamilton_laws),
    ("conv2d_matches_direct_loops", conv_direct),
    ("phc_n1_is_real_conv", phc_n1),
    ("phc_hamilton_is_quaternion_conv", phc_hamilton),
    ("quaternion_1x1_is_pointwise_product", qconv_pointwise),
    ("gradients_conv_bn_phc", grads_layers),
    ("gradients_block_and_network", grads_networks),
    ("auc_matches_pairwise_count", auc_pairwise),
];

/// Runs every check; a check that errors counts as failed.
pub fn run_all(seed: u64, mut report: impl FnMut(&CheckOutcome)) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|&(name, check)| {
            let t = Instant::now();
            let (passed, detail) = check(seed).unwrap_or_else(|e| (false, format!("error: {e}")));
            let outcome = CheckOutcome { name, passed, detail, seconds: t.elapsed().as_secs_f64() };
            report(&outcome);
            outcome
        })
        .collect()
}

fn quat(r: &mut ChaCha8Rng) -> Quaternion {
    Quaternion::new(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0))
}

fn qdist(a: Quaternion, b: Quaternion) -> f64 {
    let (a, b) = (a.to_array(), b.to_array());
    (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

fn hamilton_laws(seed: u64) -> Result<(bool, String)> {
    let (i, j, k, one) = (Quaternion::I, Quaternion::J, Quaternion::K, Quaternion::ONE);
    let mut worst = [i * i, j * j, k * k, i * j * k].iter().map(|&q| qdist(q, -one)).fold(0.0, f64::max);
    let mut r = rng::stream(seed, "verify.hamilton", 0);
    for _ in 0..1000 {
        let (p, q, s) = (quat(&mut r), quat(&mut r), quat(&mut r));
        worst = worst.max(qdist(hamilton_product(hamilton_product(p, q), s), hamilton_product(p, hamilton_product(q, s))));
        worst = worst.max(((p * q).norm() - p.norm() * q.norm()).abs());
        worst = worst.max(qdist(p * one, p));
    }
    Ok((worst < 1e-12, format!("max deviation {worst:.2e} over 1000 triples")))
}

fn direct_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let [n, ci, h, wd] = x.shape().0;
    let [co, _, kh, kw] = w.shape().0;
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    Tensor::from_fn([n, co, oh, ow], |[b, o, y, xx]| {
        let mut acc = 0.0;
        for c in 0..ci {
            for u in 0..kh {
                for v in 0..kw {
                    let (iy, ix) = ((y * stride + u) as isize - pad as isize, (xx * stride + v) as isize - pad as isize);
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                        acc += x.at(b, c, iy as usize, ix as usize) * w.at(o, c, u, v);
                    }
                }
            }
        }
        acc
    })
}

struct ConvCase {
    x: Tensor<f64>,
    w_shape: [usize; 4],
    geom: ConvGeometry,
}

/// Random small convolution whose channel counts are multiples of `m`.
fn conv_case(r: &mut ChaCha8Rng, m: usize) -> ConvCase {
    let k = r.gen_range(1..=3);
    let stride = r.gen_range(1..=2);
    let pad = r.gen_range(0..=k / 2);
    let h = r.gen_range(k..=8);
    let w = r.gen_range(k..=8);
    let ci = m * r.gen_range(1..=3);
    let co = m * r.gen_range(1..=3);
    let x = Tensor::randn([r.gen_range(1..=2), ci, h, w], r);
    ConvCase { x, w_shape: [co, ci, k, k], geom: ConvGeometry::new(stride, pad) }
}

fn conv_direct(seed: u64) -> Result<(bool, String)> {
    let mut r = rng::stream(seed, "verify.conv", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let c = conv_case(&mut r, 1);
        let w = Tensor::randn(c.w_shape, &mut r);
        let fast = conv2d(&c.x, &w, None, c.geom)?;
        worst = worst.max(fast.max_abs_diff(&direct_conv(&c.x, &w, c.geom.stride, c.geom.padding)));
    }
    Ok((worst < 1e-12, format!("max |diff| {worst:.2e} over 50 shapes")))
}

fn phc_n1(seed: u64) -> Result<(bool, String)> {
    let mut r = rng::stream(seed, "verify.phc1", 0);
    let mut mismatches = 0;
    for _ in 0..50 {
        let c = conv_case(&mut r, 1);
        let [co, ci, k, _] = c.w_shape;
        let cfg = PhcConfig::new(1, ci, co, k).stride(c.geom.stride).padding(c.geom.padding);
        let mut store = ParamStore::<f64>::new();
        let layer = PhcLayer::new(&mut store, "l", cfg, &mut r)?;
        *store.get_mut(layer.algebra.expect("algebra requested")) = Tensor::ones([1, 1, 1, 1]);
        let phc = layer.apply(&store, &c.x)?;
        let real = conv2d(&c.x, store.get(layer.filters), None, c.geom)?;
        mismatches += usize::from(phc.data() != real.data());
    }
    Ok((mismatches == 0, format!("{mismatches} of 50 shapes differ bitwise")))
}

fn phc_hamilton(seed: u64) -> Result<(bool, String)> {
    let mut r = rng::stream(seed, "verify.phc4", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let c = conv_case(&mut r, 4);
        let [co, ci, k, _] = c.w_shape;
        let filters = Tensor::randn([co, ci / 4, k, k], &mut r);
        let w = kron_sum(&hamilton_algebra(), &filters, 4)?;
        let phc = conv2d(&c.x, &w, None, c.geom)?;
        let comps: Vec<Tensor<f64>> = (0..4).map(|i| filters.batch_slice(i * co / 4..(i + 1) * co / 4)).collect::<Result<_>>()?;
        let q = quaternion_conv2d(&c.x, [&comps[0], &comps[1], &comps[2], &comps[3]], c.geom)?;
        worst = worst.max(phc.max_abs_diff(&q));
    }
    Ok((worst < 1e-12, format!("max |diff| {worst:.2e} over 30 shapes")))
}

fn qconv_pointwise(seed: u64) -> Result<(bool, String)> {
    let mut r = rng::stream(seed, "verify.q1x1", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (h, w) = (r.gen_range(1..=6), r.gen_range(1..=6));
        let x = Tensor::<f64>::randn([1, 4, h, w], &mut r);
        let wq: Vec<Tensor<f64>> = (0..4).map(|_| Tensor::randn([1, 1, 1, 1], &mut r)).collect();
        let y = quaternion_conv2d(&x, [&wq[0], &wq[1], &wq[2], &wq[3]], ConvGeometry::new(1, 0))?;
        let wq = Quaternion::new(wq[0].item(), wq[1].item(), wq[2].item(), wq[3].item());
        for yy in 0..h {
            for xx in 0..w {
                let xq = Quaternion::new(x.at(0, 0, yy, xx), x.at(0, 1, yy, xx), x.at(0, 2, yy, xx), x.at(0, 3, yy, xx));
                let expect = hamilton_product(wq, xq).to_array();
                for (c, e) in expect.iter().enumerate() {
                    worst = worst.max((y.at(0, c, yy, xx) - e).abs());
                }
            }
        }
    }
    Ok((worst < 1e-12, format!("max |diff| {worst:.2e} over 50 maps")))
}

const GRAD_SEEDS: u64 = 20;

fn grads_layers(seed: u64) -> Result<(bool, String)> {
    let cfg = GradCheckConfig { max_per_tensor: Some(12), ..Default::default() };
    let (mut worst, mut kinks, mut ok): (f64, usize, bool) = (0.0, 0, true);
    for s in 0..GRAD_SEEDS {
        let mut r = rng::stream(seed, "verify.grad.layers", s);
        let mut store = ParamStore::<f64>::new();
        let layer = PhcLayer::new(&mut store, "phc", PhcConfig::new(2, 4, 6, 3).padding(1).stride(2), &mut r)?;
        let gamma = store.add("gamma", Tensor::uniform([6, 1, 1, 1], 1.0, &mut r).map(|v| v + 1.5));
        let beta = store.add("beta", Tensor::randn([6, 1, 1, 1], &mut r));
        let x = Tensor::randn([3, 4, 5, 5], &mut r);
        let mix = Tensor::randn([3, 6, 3, 3], &mut r);
        let (mut mean, mut var) = (vec![0.0; 6], vec![1.0; 6]);
        let rep = check_gradients(&mut store, cfg, |g, b| {
            let xv = g.constant(x.clone());
            let y = layer.forward(g, b, xv)?;
            let y = g.batch_norm(y, b.var(gamma), b.var(beta), &mut mean, &mut var, Mode::Train, BatchNormConfig::default())?;
            let m = g.constant(mix.clone());
            let y = g.mul(y, m)?;
            g.sum(y)
        })?;
        worst = worst.max(rep.max_rel_err);
        kinks += rep.kinks;
        ok &= rep.passed();
    }
    Ok((ok, format!("max rel err {worst:.2e} over {GRAD_SEEDS} seeds, {kinks} probes on kinks skipped")))
}

fn grads_networks(seed: u64) -> Result<(bool, String)> {
    let cfg = GradCheckConfig { max_per_tensor: Some(4), ..Default::default() };
    let (mut worst, mut kinks, mut ok): (f64, usize, bool) = (0.0, 0, true);
    for s in 0..GRAD_SEEDS {
        let mut r = rng::stream(seed, "verify.grad.net", s);
        let mut params = ParamStore::<f64>::new();
        let mut buffers = ParamStore::<f64>::new();
        let block = BasicBlock::new(&mut params, &mut buffers, "b", BlockConfig::auto(2, 4, 6, 2, 1), &mut r)?;
        let x = Tensor::randn([2, 4, 6, 6], &mut r);
        let mix = Tensor::randn([2, 6, 3, 3], &mut r);
        let rep = check_gradients(&mut params, cfg, |g, b| {
            let xv = g.constant(x.clone());
            let y = block.forward(g, b, &mut buffers, xv, Mode::Train)?;
            let m = g.constant(mix.clone());
            let y = g.mul(y, m)?;
            g.sum(y)
        })?;
        worst = worst.max(rep.max_rel_err);
        kinks += rep.kinks;
        ok &= rep.passed();

        let mut model = Model::<f64>::build(&ModelSpec::mini(2, 2), &mut r)?;
        let x = Tensor::randn([3, 2, 16, 16], &mut r);
        let labels = [0, 1, 1];
        let mut buffers = model.buffers.clone();
        let network = model.network.clone();
        let rep = check_gradients(&mut model.params, cfg, |g, b| {
            let xv = g.constant(x.clone());
            let logits = network.forward(g, b, &mut buffers, xv, Mode::Train)?;
            g.cross_entropy(logits, &labels)
        })?;
        worst = worst.max(rep.max_rel_err);
        kinks += rep.kinks;
        ok &= rep.passed();
    }
    Ok((ok, format!("max rel err {worst:.2e} over {GRAD_SEEDS} seeds, {kinks} probes on kinks skipped")))
}

fn pairwise_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

fn auc_pairwise(seed: u64) -> Result<(bool, String)> {
    let mut r = rng::stream(seed, "verify.auc", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = r.gen_range(2..=50);
        let mut labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let levels = r.gen_range(1..=n);
        let scores: Vec<f64> = (0..n).map(|_| r.gen_range(0..levels) as f64 / levels as f64).collect();
        worst = worst.max((roc_auc(&scores, &labels)?.auc - pairwise_auc(&scores, &labels)).abs());
    }
    Ok((worst < 1e-12, format!("max |diff| {worst:.2e} over 500 instances")))
}

