use crate::error::{bail, Result};
use crate::kernels::conv::window_extent;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Max pooling; padded positions never win. Returns the flat argmax of every
/// output element.
pub(crate) fn max_pool2d<T: Scalar>(
    x: &Tensor<T>,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let [n, c, h, w] = x.shape().0;
    if padding * 2 > kernel {
        bail!(Geometry, "pool padding {padding} exceeds half of kernel {kernel}");
    }
    let (Some(ho), Some(wo)) = (
        window_extent(h, kernel, stride, padding),
        window_extent(w, kernel, stride, padding),
    ) else {
        bail!(Geometry, "max_pool2d k={kernel} s={stride} does not fit {}", x.shape());
    };
    let out_shape = Shape::new(n, c, ho, wo);
    let mut out = Vec::with_capacity(out_shape.numel());
    let mut argmax = Vec::with_capacity(out_shape.numel());
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = T::neg_infinity();
                    let mut best_i = usize::MAX;
                    for i in 0..kernel {
                        let y = (oy * stride + i) as isize - padding as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for j in 0..kernel {
                            let xx = (ox * stride + j) as isize - padding as isize;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            let at = base + y as usize * w + xx as usize;
                            let v = x.data()[at];
                            if best_i == usize::MAX || v > best {
                                best = v;
                                best_i = at;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
            }
        }
    }
    Ok((Tensor::from_vec(out_shape, out)?, argmax))
}

pub(crate) fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let plane = s.plane();
    let scale = T::one() / T::of(plane as f64);
    let data = x.data().chunks_exact(plane).map(|p| p.iter().copied().sum::<T>() * scale).collect();
    Tensor::from_vec([s.n(), s.c(), 1, 1], data).unwrap()
}
