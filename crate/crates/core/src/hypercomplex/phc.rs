//! Parameterized hypercomplex convolution: the convolution weight is the sum
//! of Kronecker products `W = Σᵢ Aᵢ ⊗ Fᵢ` over `i = 0..n`, where the `n×n`
//! algebra matrices `Aᵢ` and the filter banks `Fᵢ` are both learned.
//!
//! Layouts:
//! - algebra: `[n, n, n, 1]`, entry `(i, r, s)` is `Aᵢ[r][s]`;
//! - filters: `[n·Cout/n, Cin/n, kh, kw]`, bank `Fᵢ` is rows `i·Cout/n..(i+1)·Cout/n`;
//! - weight:  `[Cout, Cin, kh, kw]`, block `(r, s)` is `Σᵢ Aᵢ[r][s]·Fᵢ`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Graph, Var};
use crate::error::{bail, Result};
use crate::kernels::conv::{self, ConvGeometry};
use crate::nn::{Binding, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub const MAX_ALGEBRA_DIM: usize = 8;

fn check_layout(algebra: Shape, filters: Shape, n: usize) -> Result<(usize, usize, usize)> {
    if algebra != Shape::new(n, n, n, 1) {
        bail!(Algebra, "algebra tensor {algebra} is not [{n}, {n}, {n}, 1]");
    }
    if n == 0 || filters.n() % n != 0 {
        bail!(Algebra, "filter bank rows {} not divisible by n = {n}", filters.n());
    }
    Ok((filters.n() / n, filters.c(), filters.plane()))
}

/// Materializes `Σᵢ Aᵢ ⊗ Fᵢ` as a `[Cout, Cin, kh, kw]` convolution weight.
pub fn kron_sum<T: Scalar>(algebra: &Tensor<T>, filters: &Tensor<T>, n: usize) -> Result<Tensor<T>> {
    let (co, ci, k) = check_layout(algebra.shape(), filters.shape(), n)?;
    let fs = filters.shape();
    let out_shape = Shape::new(n * co, n * ci, fs.h(), fs.w());
    let mut out = vec![T::zero(); out_shape.numel()];
    let a = algebra.data();
    let f = filters.data();
    let row = n * ci * k;
    for i in 0..n {
        for r in 0..n {
            for s in 0..n {
                let coef = a[(i * n + r) * n + s];
                for o in 0..co {
                    let src = &f[(i * co + o) * ci * k..][..ci * k];
                    let dst = &mut out[(r * co + o) * row + s * ci * k..][..ci * k];
                    for (d, v) in dst.iter_mut().zip(src) {
                        *d += coef * *v;
                    }
                }
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}

pub(crate) fn kron_sum_backward<T: Scalar>(
    algebra: &Tensor<T>,
    filters: &Tensor<T>,
    grad_weight: &Tensor<T>,
    n: usize,
) -> (Tensor<T>, Tensor<T>) {
    let (co, ci, k) = check_layout(algebra.shape(), filters.shape(), n).expect("validated in forward");
    let a = algebra.data();
    let f = filters.data();
    let dw = grad_weight.data();
    let row = n * ci * k;
    let mut da = vec![T::zero(); a.len()];
    let mut df = vec![T::zero(); f.len()];
    for i in 0..n {
        for r in 0..n {
            for s in 0..n {
                let ai = (i * n + r) * n + s;
                let coef = a[ai];
                let mut acc = T::zero();
                for o in 0..co {
                    let fi = (i * co + o) * ci * k;
                    let g = &dw[(r * co + o) * row + s * ci * k..][..ci * k];
                    for (j, gv) in g.iter().enumerate() {
                        acc += *gv * f[fi + j];
                        df[fi + j] += coef * *gv;
                    }
                }
                da[ai] = acc;
            }
        }
    }
    (
        Tensor::from_vec(algebra.shape(), da).unwrap(),
        Tensor::from_vec(filters.shape(), df).unwrap(),
    )
}

fn algebra_from(n: usize, entries: &[(usize, usize, usize, f64)]) -> Tensor<f64> {
    let mut t = Tensor::zeros([n, n, n, 1]);
    for &(i, r, s, v) in entries {
        *t.at_mut(i, r, s, 0) = v;
    }
    t
}

/// `A₀ = [[1]]`: the PHC layer reduces to a real convolution.
pub fn real_algebra<T: Scalar>() -> Tensor<T> {
    algebra_from(1, &[(0, 0, 0, 1.0)]).cast()
}

/// Complex multiplication: `A₀ = I`, `A₁ = [[0, -1], [1, 0]]`.
pub fn complex_algebra<T: Scalar>() -> Tensor<T> {
    algebra_from(2, &[(0, 0, 0, 1.0), (0, 1, 1, 1.0), (1, 0, 1, -1.0), (1, 1, 0, 1.0)]).cast()
}

/// The four sign/permutation matrices that make `Σᵢ Aᵢ ⊗ Wᵢ` the
/// Hamilton-product block matrix
///
/// ```text
/// W0 -W1 -W2 -W3
/// W1  W0 -W3  W2
/// W2  W3  W0 -W1
/// W3 -W2  W1  W0
/// ```
pub fn hamilton_algebra<T: Scalar>() -> Tensor<T> {
    let mut entries = Vec::with_capacity(16);
    for (r, row) in super::qconv::HAMILTON_BLOCKS.iter().enumerate() {
        for (s, &(i, sign)) in row.iter().enumerate() {
            entries.push((i, r, s, sign));
        }
    }
    algebra_from(4, &entries).cast()
}

/// The algebra with a known closed form for `n`, if any.
pub fn natural_algebra<T: Scalar>(n: usize) -> Option<Tensor<T>> {
    match n {
        1 => Some(real_algebra()),
        2 => Some(complex_algebra()),
        4 => Some(hamilton_algebra()),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhcConfig {
    pub n: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub bias: bool,
    /// Without a learned algebra the filters are used directly as a real
    /// convolution weight; only valid for `n = 1`.
    pub algebra: bool,
}

impl PhcConfig {
    pub fn new(n: usize, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        PhcConfig {
            n,
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: 0,
            bias: false,
            algebra: true,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn algebra(mut self, algebra: bool) -> Self {
        self.algebra = algebra;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 || n > MAX_ALGEBRA_DIM {
            bail!(Algebra, "n = {n} outside 1..={MAX_ALGEBRA_DIM}");
        }
        if self.in_channels % n != 0 || self.out_channels % n != 0 {
            bail!(
                Algebra,
                "channels {} -> {} not divisible by n = {n}",
                self.in_channels,
                self.out_channels
            );
        }
        if !self.algebra && n != 1 {
            bail!(Algebra, "a layer without algebra matrices needs n = 1, got {n}");
        }
        if self.kernel == 0 || self.stride == 0 {
            bail!(Geometry, "kernel and stride must be positive");
        }
        Ok(())
    }

    /// Learnable scalars: `n³ + Cout·Cin·k²/n` plus the optional bias.
    pub fn param_count(&self) -> usize {
        let n = self.n;
        let algebra = if self.algebra { n * n * n } else { 0 };
        let filters = self.out_channels * self.in_channels * self.kernel * self.kernel / n;
        algebra + filters + if self.bias { self.out_channels } else { 0 }
    }
}

/// A PHC layer whose tensors live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct PhcLayer {
    pub config: PhcConfig,
    pub algebra: Option<ParamId>,
    pub filters: ParamId,
    pub bias: Option<ParamId>,
}

impl PhcLayer {
    /// Registers freshly initialized tensors under `name.*`.
    ///
    /// Filters are Kaiming-uniform over the materialized fan-in; the algebra
    /// starts at the natural one for `n ∈ {1, 2, 4}` plus `N(0, 0.01²)` noise,
    /// otherwise i.i.d. `N(0, (1/n)²)`.
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        config: PhcConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let n = config.n;
        let k = config.kernel;
        let algebra = config.algebra.then(|| {
            let a = match natural_algebra::<f64>(n) {
                Some(base) => {
                    let noise = Normal::new(0.0, 0.01).unwrap();
                    base.map(|v| v + noise.sample(rng))
                }
                None => {
                    let dist = Normal::new(0.0, 1.0 / n as f64).unwrap();
                    Tensor::from_fn([n, n, n, 1], |_| dist.sample(rng))
                }
            };
            store.add(format!("{name}.algebra"), a.cast())
        });
        let fan_in = config.in_channels * k * k;
        let bound = (6.0 / fan_in as f64).sqrt();
        let shape = [config.out_channels, config.in_channels / n, k, k];
        let filters = store.add(format!("{name}.filters"), Tensor::uniform(shape, bound, rng));
        let bias = config
            .bias
            .then(|| store.add(format!("{name}.bias"), Tensor::zeros(Shape::vector(config.out_channels))));
        Ok(PhcLayer { config, algebra, filters, bias })
    }

    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry::new(self.config.stride, self.config.padding)
    }

    pub fn param_count<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        self.algebra.map_or(0, |a| store.get(a).numel())
            + store.get(self.filters).numel()
            + self.bias.map_or(0, |b| store.get(b).numel())
    }

    /// The `[Cout, Cin, kh, kw]` weight this layer convolves with.
    pub fn materialize<T: Scalar>(&self, store: &ParamStore<T>) -> Result<Tensor<T>> {
        match self.algebra {
            Some(a) => kron_sum(store.get(a), store.get(self.filters), self.config.n),
            None => Ok(store.get(self.filters).clone()),
        }
    }

    /// Forward without a tape.
    pub fn apply<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x.shape())?;
        let w = self.materialize(store)?;
        conv::conv2d(x, &w, self.bias.map(|b| store.get(b)), self.geometry())
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding, x: Var) -> Result<Var> {
        self.check_input(g.shape(x))?;
        let w = match self.algebra {
            Some(a) => g.kron_sum(bind.var(a), bind.var(self.filters), self.config.n)?,
            None => bind.var(self.filters),
        };
        g.conv2d(x, w, self.bias.map(|b| bind.var(b)), self.geometry())
    }

    fn check_input(&self, shape: Shape) -> Result<()> {
        if shape.c() != self.config.in_channels {
            bail!(
                Dimension,
                "PHC layer expects {} input channels, got input {shape}",
                self.config.in_channels
            );
        }
        Ok(())
    }
}
