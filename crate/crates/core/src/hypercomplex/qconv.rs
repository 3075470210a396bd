//! Quaternion convolution: input channels are four equal groups
//! `x0, x1, x2, x3` and the weight is the quaternion `W0 + W1 i + W2 j + W3 k`.
//! Output group `r` is `Σₛ ±W_{b(r,s)} * x_s` following the Hamilton
//! product sign pattern.

use crate::error::{bail, Result};
use crate::kernels::conv::{conv2d, ConvGeometry};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// `HAMILTON_BLOCKS[r][s] = (component, sign)` of block `(r, s)`.
pub const HAMILTON_BLOCKS: [[(usize, f64); 4]; 4] = [
    [(0, 1.0), (1, -1.0), (2, -1.0), (3, -1.0)],
    [(1, 1.0), (0, 1.0), (3, -1.0), (2, 1.0)],
    [(2, 1.0), (3, 1.0), (0, 1.0), (1, -1.0)],
    [(3, 1.0), (2, -1.0), (1, 1.0), (0, 1.0)],
];

fn check_components<T: Scalar>(weights: [&Tensor<T>; 4]) -> Result<Shape> {
    let s = weights[0].shape();
    if weights.iter().any(|w| w.shape() != s) {
        bail!(Dimension, "quaternion weight components differ in shape");
    }
    Ok(s)
}

/// The `[4·co, 4·c, kh, kw]` real weight equivalent to the quaternion weight,
/// assembled block by block.
pub fn quaternion_block_weight<T: Scalar>(weights: [&Tensor<T>; 4]) -> Result<Tensor<T>> {
    let s = check_components(weights)?;
    let [co, c, kh, kw] = s.0;
    Ok(Tensor::from_fn([4 * co, 4 * c, kh, kw], |[oc, ic, y, x]| {
        let (comp, sign) = HAMILTON_BLOCKS[oc / co][ic / c];
        let v = weights[comp].at(oc % co, ic % c, y, x);
        if sign < 0.0 {
            -v
        } else {
            v
        }
    }))
}

/// Direct quaternion convolution: sixteen component convolutions combined
/// with the Hamilton signs.
pub fn quaternion_conv2d<T: Scalar>(
    x: &Tensor<T>,
    weights: [&Tensor<T>; 4],
    geom: ConvGeometry,
) -> Result<Tensor<T>> {
    let s = check_components(weights)?;
    let channels = x.shape().c();
    if channels % 4 != 0 {
        bail!(Algebra, "quaternion input needs a multiple of 4 channels, got {}", x.shape());
    }
    let c = channels / 4;
    if s.c() != c {
        bail!(Dimension, "quaternion weight {s} does not match {c} channels per component");
    }
    let parts: Vec<Tensor<T>> = (0..4)
        .map(|t| x.channel_slice(t * c..(t + 1) * c))
        .collect::<Result<_>>()?;
    let mut outputs = Vec::with_capacity(4);
    for row in HAMILTON_BLOCKS {
        let mut acc: Option<Tensor<T>> = None;
        for (xs, (comp, sign)) in parts.iter().zip(row) {
            let y = conv2d(xs, weights[comp], None, geom)?;
            match acc.as_mut() {
                None => acc = Some(if sign < 0.0 { y.map(|v| -v) } else { y }),
                Some(a) => a.data_mut().iter_mut().zip(y.data()).for_each(|(o, v)| {
                    if sign < 0.0 {
                        *o -= *v
                    } else {
                        *o += *v
                    }
                }),
            }
        }
        outputs.push(acc.unwrap());
    }
    let refs: Vec<&Tensor<T>> = outputs.iter().collect();
    Tensor::concat_channels(&refs)
}
