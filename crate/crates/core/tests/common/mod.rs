#![allow(dead_code)]

use phnet_core::autograd::{Graph, Var};
use phnet_core::nn::{Binding, ParamStore};
use phnet_core::{Result, Scalar, Tensor};

/// Cross-correlation by direct summation, zero padding.
pub fn naive_conv<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, bias: Option<&[T]>, stride: usize, pad: usize) -> Tensor<T> {
    let [n, ci, h, wd] = x.shape().0;
    let [co, wci, kh, kw] = w.shape().0;
    assert_eq!(ci, wci);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    Tensor::from_fn([n, co, oh, ow], |[b, o, y, xx]| {
        let mut acc = 0.0f64;
        for c in 0..ci {
            for u in 0..kh {
                for v in 0..kw {
                    let iy = (y * stride + u) as isize - pad as isize;
                    let ix = (xx * stride + v) as isize - pad as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                        acc += x.at(b, c, iy as usize, ix as usize).as_f64() * w.at(o, c, u, v).as_f64();
                    }
                }
            }
        }
        T::of(acc + bias.map_or(0.0, |bs| bs[o].as_f64()))
    })
}

/// Mann-Whitney statistic by counting every positive/negative pair.
pub fn pairwise_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

pub struct FdReport {
    pub worst: f64,
    pub at: String,
    pub checked: usize,
    /// Coordinates where the one-sided slopes disagree: a ReLU or max-pool
    /// switch lies within one step, so no derivative exists to compare.
    pub kinks: usize,
}

/// Worst relative error between tape gradients and central differences,
/// probing up to `per_tensor` coordinates of every tensor in `params`.
pub fn fd_check(
    params: &mut ParamStore<f64>,
    per_tensor: usize,
    mut loss: impl FnMut(&mut Graph<f64>, &Binding) -> Result<Var>,
) -> FdReport {
    const STEP: f64 = 1e-5;
    let mut g = Graph::new();
    let bind = params.bind(&mut g);
    let l = loss(&mut g, &bind).unwrap();
    g.backward(l).unwrap();
    let analytic = bind.grads(&g);
    let mut value = |params: &ParamStore<f64>| {
        let mut g = Graph::new();
        let bind = params.bind_frozen(&mut g);
        let l = loss(&mut g, &bind).unwrap();
        g.value(l).item()
    };
    let mut report = FdReport { worst: 0.0, at: String::new(), checked: 0, kinks: 0 };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let len = params.get(id).numel();
        let stride = (len / per_tensor).max(1);
        for i in (0..len).step_by(stride).take(per_tensor) {
            let orig = params.get(id).data()[i];
            let mid = value(params);
            params.get_mut(id).data_mut()[i] = orig + STEP;
            let up = value(params);
            params.get_mut(id).data_mut()[i] = orig - STEP;
            let down = value(params);
            params.get_mut(id).data_mut()[i] = orig;
            let (right, left) = ((up - mid) / STEP, (mid - down) / STEP);
            if (right - left).abs() > 1e-3 * right.abs().max(left.abs()) + 1e-7 {
                report.kinks += 1;
                continue;
            }
            let fd = (up - down) / (2.0 * STEP);
            let a = analytic[id.index()].data()[i];
            // absolute floor for coordinates whose true gradient is ~0
            let rel = (a - fd).abs() / fd.abs().max(a.abs()).max(1e-6);
            report.checked += 1;
            if rel > report.worst {
                report.worst = rel;
                report.at = format!("{}[{i}] tape {a:.6e} fd {fd:.6e}", params.name(id));
            }
        }
    }
    report
}
