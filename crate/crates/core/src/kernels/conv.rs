//! Cross-correlation via im2col and GEMM.

use crate::error::{bail, Result};
use crate::scalar::{gemm, Mat, Scalar};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub const fn new(stride: usize, padding: usize) -> Self {
        ConvGeometry { stride, padding }
    }
}

/// Output extent of a sliding window, or `None` when the window does not fit.
pub fn window_extent(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub fn conv_output_shape(input: Shape, weight: Shape, geom: ConvGeometry) -> Result<Shape> {
    let [n, cin, h, w] = input.0;
    let [cout, wcin, kh, kw] = weight.0;
    if cin != wcin {
        bail!(Dimension, "conv2d input {input} does not match weight {weight}");
    }
    if geom.stride == 0 {
        bail!(Geometry, "stride must be positive");
    }
    match (
        window_extent(h, kh, geom.stride, geom.padding),
        window_extent(w, kw, geom.stride, geom.padding),
    ) {
        (Some(ho), Some(wo)) if ho > 0 && wo > 0 && n > 0 && cout > 0 => {
            Ok(Shape::new(n, cout, ho, wo))
        }
        _ => bail!(
            Geometry,
            "conv2d of {input} with {weight} (stride {}, padding {}) has empty output",
            geom.stride,
            geom.padding
        ),
    }
}

struct Im2Col {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    padding: usize,
}

impl Im2Col {
    fn new(input: Shape, weight: Shape, out: Shape, geom: ConvGeometry) -> Self {
        Im2Col {
            cin: input.c(),
            h: input.h(),
            w: input.w(),
            kh: weight.h(),
            kw: weight.w(),
            ho: out.h(),
            wo: out.w(),
            stride: geom.stride,
            padding: geom.padding,
        }
    }

    fn rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    /// 1×1, stride 1, no padding: the sample itself is the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.padding == 0
    }

    fn fill<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let p = self.cols();
        for c in 0..self.cin {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.ho {
                        let y = (oy * self.stride + i) as isize - self.padding as isize;
                        let line = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        if y < 0 || y >= self.h as isize {
                            line.fill(T::zero());
                            continue;
                        }
                        let src = &x[(c * self.h + y as usize) * self.w..][..self.w];
                        for (ox, d) in line.iter_mut().enumerate() {
                            let xx = (ox * self.stride + j) as isize - self.padding as isize;
                            *d = if xx < 0 || xx >= self.w as isize {
                                T::zero()
                            } else {
                                src[xx as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn scatter_add<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.cols();
        for c in 0..self.cin {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.ho {
                        let y = (oy * self.stride + i) as isize - self.padding as isize;
                        if y < 0 || y >= self.h as isize {
                            continue;
                        }
                        let dst = &mut dx[(c * self.h + y as usize) * self.w..][..self.w];
                        for ox in 0..self.wo {
                            let xx = (ox * self.stride + j) as isize - self.padding as isize;
                            if xx >= 0 && xx < self.w as isize {
                                dst[xx as usize] += src[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geom: ConvGeometry,
) -> Result<Tensor<T>> {
    let out_shape = conv_output_shape(input.shape(), weight.shape(), geom)?;
    let cout = out_shape.c();
    if let Some(b) = bias {
        if b.numel() != cout {
            bail!(Dimension, "bias {} does not match {cout} output channels", b.shape());
        }
    }
    let ic = Im2Col::new(input.shape(), weight.shape(), out_shape, geom);
    let (k, p) = (ic.rows(), ic.cols());
    let in_len = input.shape().sample_len();
    let out_len = out_shape.sample_len();
    let mut out = vec![T::zero(); out_shape.numel()];
    let mut cols = if ic.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
    for n in 0..out_shape.n() {
        let x = &input.data()[n * in_len..(n + 1) * in_len];
        let y = &mut out[n * out_len..(n + 1) * out_len];
        let colm = if ic.is_pointwise() {
            x
        } else {
            ic.fill(x, &mut cols);
            &cols
        };
        gemm(Mat::new(weight.data(), cout, k), Mat::new(colm, k, p), T::zero(), y);
        if let Some(b) = bias {
            for (co, plane) in y.chunks_exact_mut(p).enumerate() {
                let bv = b.data()[co];
                plane.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    geom: ConvGeometry,
    need_input: bool,
) -> ConvGrads<T> {
    let out_shape = grad_out.shape();
    let cout = out_shape.c();
    let ic = Im2Col::new(input.shape(), weight.shape(), out_shape, geom);
    let (k, p) = (ic.rows(), ic.cols());
    let in_len = input.shape().sample_len();
    let out_len = out_shape.sample_len();

    let mut dw = vec![T::zero(); weight.numel()];
    let mut db = vec![T::zero(); cout];
    let mut dx = need_input.then(|| vec![T::zero(); input.numel()]);
    let mut cols = if ic.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
    let mut dcols = vec![T::zero(); if need_input { k * p } else { 0 }];

    for n in 0..out_shape.n() {
        let x = &input.data()[n * in_len..(n + 1) * in_len];
        let dy = &grad_out.data()[n * out_len..(n + 1) * out_len];
        for (co, plane) in dy.chunks_exact(p).enumerate() {
            db[co] += plane.iter().copied().sum::<T>();
        }
        let colm = if ic.is_pointwise() {
            x
        } else {
            ic.fill(x, &mut cols);
            &cols
        };
        gemm(Mat::new(dy, cout, p), Mat::t(colm, k, p), T::one(), &mut dw);
        if let Some(dx) = dx.as_mut() {
            let dxs = &mut dx[n * in_len..(n + 1) * in_len];
            if ic.is_pointwise() {
                gemm(Mat::t(weight.data(), cout, k), Mat::new(dy, cout, p), T::one(), dxs);
            } else {
                gemm(Mat::t(weight.data(), cout, k), Mat::new(dy, cout, p), T::zero(), &mut dcols);
                ic.scatter_add(&dcols, dxs);
            }
        }
    }
    ConvGrads {
        input: dx.map(|d| Tensor::from_vec(input.shape(), d).unwrap()),
        weight: Tensor::from_vec(weight.shape(), dw).unwrap(),
        bias: db,
    }
}
