//! Per-channel batch normalization over `(N, H, W)`.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormConfig {
    pub eps: f64,
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        BatchNormConfig { eps: 1e-5, momentum: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Normalized activations and inverse standard deviations, kept for backward.
pub(crate) struct BnSaved<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

fn channel_iter<T: Scalar>(x: &Tensor<T>, c: usize) -> impl Iterator<Item = &[T]> {
    let s = x.shape();
    let plane = s.plane();
    (0..s.n()).map(move |n| &x.data()[(n * s.c() + c) * plane..][..plane])
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn batch_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &mut [T],
    running_var: &mut [T],
    mode: Mode,
    cfg: BatchNormConfig,
) -> (Tensor<T>, BnSaved<T>) {
    let s = x.shape();
    let (channels, plane) = (s.c(), s.plane());
    let count = s.n() * plane;
    let eps = T::of(cfg.eps);
    let momentum = T::of(cfg.momentum);
    let mut y = Tensor::zeros(s);
    let mut xhat = vec![T::zero(); x.numel()];
    let mut inv_std = vec![T::zero(); channels];
    for c in 0..channels {
        let (mean, istd) = match mode {
            Mode::Train => {
                let m = T::of(count as f64);
                let mean = channel_iter(x, c).flatten().copied().sum::<T>() / m;
                let var = channel_iter(x, c)
                    .flatten()
                    .map(|&v| (v - mean) * (v - mean))
                    .sum::<T>()
                    / m;
                let unbiased = if count > 1 { var * m / (m - T::one()) } else { var };
                running_mean[c] = (T::one() - momentum) * running_mean[c] + momentum * mean;
                running_var[c] = (T::one() - momentum) * running_var[c] + momentum * unbiased;
                (mean, T::one() / (var + eps).sqrt())
            }
            Mode::Eval => (running_mean[c], T::one() / (running_var[c] + eps).sqrt()),
        };
        inv_std[c] = istd;
        for n in 0..s.n() {
            let base = (n * channels + c) * plane;
            for i in base..base + plane {
                let h = (x.data()[i] - mean) * istd;
                xhat[i] = h;
                y.data_mut()[i] = gamma[c] * h + beta[c];
            }
        }
    }
    (y, BnSaved { xhat, inv_std })
}

pub(crate) struct BnGrads<T> {
    pub input: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub(crate) fn batch_norm_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    gamma: &[T],
    saved: &BnSaved<T>,
    mode: Mode,
) -> BnGrads<T> {
    let s = grad_out.shape();
    let (channels, plane) = (s.c(), s.plane());
    let m = T::of((s.n() * plane) as f64);
    let dy = grad_out.data();
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    for c in 0..channels {
        let idx = move |n: usize| (n * channels + c) * plane..(n * channels + c + 1) * plane;
        let (mut sum_dy, mut sum_dy_xhat) = (T::zero(), T::zero());
        for n in 0..s.n() {
            for i in idx(n) {
                sum_dy += dy[i];
                sum_dy_xhat += dy[i] * saved.xhat[i];
            }
        }
        dgamma[c] = sum_dy_xhat;
        dbeta[c] = sum_dy;
        let scale = gamma[c] * saved.inv_std[c];
        for n in 0..s.n() {
            for i in idx(n) {
                dx[i] = match mode {
                    Mode::Train => {
                        scale / m * (m * dy[i] - sum_dy - saved.xhat[i] * sum_dy_xhat)
                    }
                    Mode::Eval => scale * dy[i],
                };
            }
        }
    }
    BnGrads { input: dx, gamma: dgamma, beta: dbeta }
}
