//! Bilinear sampling with half-pixel centers and zero or edge handling.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Bilinear value at continuous pixel coordinates, where pixel `(i, j)` has
/// its center at `(i, j)`. Points outside `[-1, size]` read as `fill`;
/// in between, missing neighbours count as `fill`.
#[inline]
pub fn sample_bilinear<T: Scalar>(plane: &[T], h: usize, w: usize, y: f64, x: f64, fill: T) -> T {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = T::of(y - y0);
    let fx = T::of(x - x0);
    let (y0, x0) = (y0 as isize, x0 as isize);
    let get = |yy: isize, xx: isize| -> T {
        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
            fill
        } else {
            plane[yy as usize * w + xx as usize]
        }
    };
    let one = T::one();
    let top = get(y0, x0) * (one - fx) + get(y0, x0 + 1) * fx;
    let bottom = get(y0 + 1, x0) * (one - fx) + get(y0 + 1, x0 + 1) * fx;
    top * (one - fy) + bottom * fy
}

/// Resize every plane to `out_h × out_w`. Source coordinates follow the
/// half-pixel convention and are clamped to the image, so borders replicate.
pub fn resize_bilinear<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let [n, c, h, w] = x.shape().0;
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let ys: Vec<f64> = (0..out_h).map(|i| ((i as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64)).collect();
    let xs: Vec<f64> = (0..out_w).map(|j| ((j as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64)).collect();
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    for plane in x.data().chunks_exact(h * w) {
        for &y in &ys {
            for &xx in &xs {
                out.push(sample_bilinear(plane, h, w, y, xx, T::zero()));
            }
        }
    }
    Tensor::from_vec([n, c, out_h, out_w], out).unwrap()
}
