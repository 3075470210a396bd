//! Dense rank-4 tensors in `N, C, H, W` row-major order.

mod io;

use std::fmt;
use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{bail, Result};
use crate::scalar::Scalar;

pub use io::{read_tensor, read_tensor_from, write_tensor, write_tensor_to, AnyTensor, MAGIC};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape([n, c, h, w])
    }

    /// A length-`len` vector stored as `[len, 1, 1, 1]`.
    pub const fn vector(len: usize) -> Self {
        Shape([len, 1, 1, 1])
    }

    pub const fn scalar() -> Self {
        Shape([1, 1, 1, 1])
    }

    pub fn n(&self) -> usize {
        self.0[0]
    }
    pub fn c(&self) -> usize {
        self.0[1]
    }
    pub fn h(&self) -> usize {
        self.0[2]
    }
    pub fn w(&self) -> usize {
        self.0[3]
    }

    /// Elements in one `[C, H, W]` sample.
    pub fn sample_len(&self) -> usize {
        self.0[1] * self.0[2] * self.0[3]
    }

    pub fn plane(&self) -> usize {
        self.0[2] * self.0[3]
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.0[1] + c) * self.0[2] + h) * self.0[3] + w
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<[usize; 4]> for Shape {
    fn from(dims: [usize; 4]) -> Self {
        Shape(dims)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview = &self.data[..self.data.len().min(8)];
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &preview)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: impl Into<Shape>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != data.len() {
            bail!(
                Dimension,
                "shape {shape} holds {} elements but buffer has {}",
                shape.numel(),
                data.len()
            );
        }
        Ok(Tensor { shape, data })
    }

    pub fn full(shape: impl Into<Shape>, value: T) -> Self {
        let shape = shape.into();
        Tensor { shape, data: vec![value; shape.numel()] }
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Shape>) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::full(Shape::scalar(), value)
    }

    pub fn from_fn(shape: impl Into<Shape>, mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let shape = shape.into();
        let [n, c, h, w] = shape.0;
        let mut data = Vec::with_capacity(shape.numel());
        for a in 0..n {
            for b in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([a, b, y, x]));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    /// Standard-normal entries.
    pub fn randn(shape: impl Into<Shape>, rng: &mut impl Rng) -> Self {
        let shape = shape.into();
        let data = (0..shape.numel())
            .map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                T::of(v)
            })
            .collect();
        Tensor { shape, data }
    }

    /// Entries uniform in `[-bound, bound)`.
    pub fn uniform(shape: impl Into<Shape>, bound: f64, rng: &mut impl Rng) -> Self {
        let shape = shape.into();
        let data = (0..shape.numel())
            .map(|_| T::of(rng.gen_range(-bound..bound)))
            .collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.offset(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut T {
        let i = self.shape.offset(n, c, h, w);
        &mut self.data[i]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {}", self.shape);
        self.data[0]
    }

    pub fn reshape(self, shape: impl Into<Shape>) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs().as_f64())
            .fold(0.0, f64::max)
    }

    /// Copy of samples `range` along the batch axis.
    pub fn batch_slice(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.shape.n() || range.start > range.end {
            bail!(Dimension, "batch range {range:?} out of bounds for {}", self.shape);
        }
        let len = self.shape.sample_len();
        let data = self.data[range.start * len..range.end * len].to_vec();
        let [_, c, h, w] = self.shape.0;
        Ok(Tensor { shape: Shape::new(range.len(), c, h, w), data })
    }

    /// Copy of channels `range`.
    pub fn channel_slice(&self, range: Range<usize>) -> Result<Self> {
        let [n, c, h, w] = self.shape.0;
        if range.end > c || range.start > range.end {
            bail!(Dimension, "channel range {range:?} out of bounds for {}", self.shape);
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * range.len() * plane);
        for b in 0..n {
            let base = b * c * plane;
            data.extend_from_slice(&self.data[base + range.start * plane..base + range.end * plane]);
        }
        Ok(Tensor { shape: Shape::new(n, range.len(), h, w), data })
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(parts: &[&Tensor<T>]) -> Result<Self> {
        let Some(first) = parts.first() else {
            bail!(Input, "concat of zero tensors");
        };
        let [n, _, h, w] = first.shape.0;
        for p in parts {
            if p.shape.n() != n || p.shape.h() != h || p.shape.w() != w {
                bail!(Dimension, "cannot concat {} with {}", first.shape, p.shape);
            }
        }
        let c: usize = parts.iter().map(|p| p.shape.c()).sum();
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for p in parts {
                let len = p.shape.sample_len();
                data.extend_from_slice(&p.data[b * len..(b + 1) * len]);
            }
        }
        Ok(Tensor { shape: Shape::new(n, c, h, w), data })
    }

    /// Concatenate along the batch axis.
    pub fn stack_batch(parts: &[&Tensor<T>]) -> Result<Self> {
        let Some(first) = parts.first() else {
            bail!(Input, "stack of zero tensors");
        };
        let [_, c, h, w] = first.shape.0;
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape.c() != c || p.shape.h() != h || p.shape.w() != w {
                bail!(Dimension, "cannot stack {} with {}", first.shape, p.shape);
            }
            n += p.shape.n();
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { shape: Shape::new(n, c, h, w), data })
    }
}
