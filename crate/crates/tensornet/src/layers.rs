//! Layers with cached forward state and hand-derived backward passes.
//!
//! `forward` caches what `backward` needs; `infer` is the cache-free path for
//! shared, immutable networks. `backward` accumulates parameter gradients
//! into [`Param::grad`] and returns the input gradient.

use rand::Rng;

use crate::scalar::gemm;
use crate::{Error, Result, Scalar, Tensor};

/// How batch normalization behaves during a cached forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running averages updated.
    Train,
    /// Running statistics, nothing updated; gradients still flow.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub value: Vec<S>,
    pub grad: Vec<S>,
}

impl<S: Scalar> Param<S> {
    pub fn new(value: Vec<S>) -> Self {
        let grad = vec![S::zero(); value.len()];
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = S::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Fan-in scaled uniform initialization, limit `sqrt(6 / fan_in)`.
fn fan_in_uniform<S: Scalar, R: Rng + ?Sized>(n: usize, fan_in: usize, rng: &mut R) -> Vec<S> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| S::lit(rng.gen_range(-limit..limit))).collect()
}

/// Periodic 2-D convolution on NHWC tensors.
///
/// Output site `v` sums input sites `s·v + c - u` (mod size) over kernel
/// offsets `u`, with anchor `c = 1` for kernels of size 2 and 3 and `c = 0`
/// for size 1. A 3×3 kernel is centred; a 2×2 stride-2 kernel covers exactly
/// one 2×2 cell.
#[derive(Debug, Clone)]
pub struct Conv<S> {
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(kernel·kernel·in_channels) × out_channels`, row index
    /// `(uy·kernel + ux)·in_channels + i`.
    pub weight: Param<S>,
    pub bias: Param<S>,
    cache: Option<ConvCache<S>>,
}

#[derive(Debug, Clone)]
struct ConvCache<S> {
    input_shape: [usize; 4],
    /// Unfolded input, or the input itself for pointwise kernels.
    col: Vec<S>,
}

impl<S: Scalar> Conv<S> {
    pub fn new<R: Rng + ?Sized>(kernel: usize, stride: usize, cin: usize, cout: usize, rng: &mut R) -> Self {
        assert!((1..=3).contains(&kernel) && (1..=2).contains(&stride), "unsupported conv geometry");
        let fan_in = kernel * kernel * cin;
        Self {
            kernel,
            stride,
            in_channels: cin,
            out_channels: cout,
            weight: Param::new(fan_in_uniform(fan_in * cout, fan_in, rng)),
            bias: Param::new(vec![S::zero(); cout]),
            cache: None,
        }
    }

    fn anchor(&self) -> isize {
        if self.kernel == 1 {
            0
        } else {
            1
        }
    }

    fn pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    fn cols(&self) -> usize {
        self.kernel * self.kernel * self.in_channels
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<[usize; 4]> {
        let (n, h, w, c) = x.dims4()?;
        if c != self.in_channels {
            return Err(Error::ShapeMismatch { expected: vec![n, h, w, self.in_channels], got: x.shape().to_vec() });
        }
        for size in [h, w] {
            if size % self.stride != 0 {
                return Err(Error::StrideMismatch { size, stride: self.stride });
            }
        }
        Ok([n, h, w, c])
    }

    /// Source offset of kernel tap `u` along one axis.
    #[inline]
    fn source(&self, v: usize, u: usize, size: usize) -> usize {
        let s = (self.stride * v) as isize + self.anchor() - u as isize;
        s.rem_euclid(size as isize) as usize
    }

    fn im2col(&self, x: &[S], [n, h, w, c]: [usize; 4]) -> Vec<S> {
        let (ho, wo) = (h / self.stride, w / self.stride);
        let k = self.kernel;
        let cols = self.cols();
        let mut col = vec![S::zero(); n * ho * wo * cols];
        for b in 0..n {
            for vy in 0..ho {
                for vx in 0..wo {
                    let row = ((b * ho + vy) * wo + vx) * cols;
                    for uy in 0..k {
                        let sy = self.source(vy, uy, h);
                        for ux in 0..k {
                            let sx = self.source(vx, ux, w);
                            let src = ((b * h + sy) * w + sx) * c;
                            let dst = row + (uy * k + ux) * c;
                            col[dst..dst + c].copy_from_slice(&x[src..src + c]);
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, col: &[S], [n, h, w, c]: [usize; 4]) -> Vec<S> {
        let (ho, wo) = (h / self.stride, w / self.stride);
        let k = self.kernel;
        let cols = self.cols();
        let mut x = vec![S::zero(); n * h * w * c];
        for b in 0..n {
            for vy in 0..ho {
                for vx in 0..wo {
                    let row = ((b * ho + vy) * wo + vx) * cols;
                    for uy in 0..k {
                        let sy = self.source(vy, uy, h);
                        for ux in 0..k {
                            let sx = self.source(vx, ux, w);
                            let dst = ((b * h + sy) * w + sx) * c;
                            let src = row + (uy * k + ux) * c;
                            for i in 0..c {
                                x[dst + i] += col[src + i];
                            }
                        }
                    }
                }
            }
        }
        x
    }

    fn apply(&self, col: &[S], [n, h, w, _]: [usize; 4]) -> Tensor<S> {
        let (ho, wo) = (h / self.stride, w / self.stride);
        let rows = n * ho * wo;
        let cout = self.out_channels;
        let mut out = Vec::with_capacity(rows * cout);
        for _ in 0..rows {
            out.extend_from_slice(&self.bias.value);
        }
        gemm(false, false, rows, self.cols(), cout, col, &self.weight.value, S::one(), &mut out);
        Tensor::new(vec![n, ho, wo, cout], out).expect("conv output shape")
    }

    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let dims = self.check_input(x)?;
        if self.pointwise() {
            Ok(self.apply(x.data(), dims))
        } else {
            Ok(self.apply(&self.im2col(x.data(), dims), dims))
        }
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let dims = self.check_input(x)?;
        let col = if self.pointwise() { x.data().to_vec() } else { self.im2col(x.data(), dims) };
        let out = self.apply(&col, dims);
        self.cache = Some(ConvCache { input_shape: dims, col });
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let cache = self.cache.take().ok_or(Error::NoCache)?;
        let [n, h, w, c] = cache.input_shape;
        let (ho, wo) = (h / self.stride, w / self.stride);
        grad.expect_shape(&[n, ho, wo, self.out_channels])?;
        let rows = n * ho * wo;
        let cols = self.cols();
        let cout = self.out_channels;
        let dy = grad.data();
        gemm(true, false, cols, rows, cout, &cache.col, dy, S::one(), &mut self.weight.grad);
        for r in 0..rows {
            for j in 0..cout {
                self.bias.grad[j] += dy[r * cout + j];
            }
        }
        let mut dcol = vec![S::zero(); rows * cols];
        gemm(false, true, rows, cout, cols, dy, &self.weight.value, S::zero(), &mut dcol);
        let dx = if self.pointwise() { dcol } else { self.col2im(&dcol, cache.input_shape) };
        Tensor::new(vec![n, h, w, c], dx)
    }
}

/// Batch normalization over every axis but the last.
#[derive(Debug, Clone)]
pub struct BatchNorm<S> {
    pub channels: usize,
    pub gamma: Param<S>,
    pub beta: Param<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache<S>>,
}

#[derive(Debug, Clone)]
struct BnCache<S> {
    shape: Vec<usize>,
    xhat: Vec<S>,
    inv_std: Vec<S>,
    batch_stats: bool,
}

impl<S: Scalar> BatchNorm<S> {
    pub const MOMENTUM: f64 = 0.99;
    pub const EPS: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new(vec![S::one(); channels]),
            beta: Param::new(vec![S::zero(); channels]),
            running_mean: vec![S::zero(); channels],
            running_var: vec![S::one(); channels],
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
            cache: None,
        }
    }

    fn check(&self, x: &Tensor<S>) -> Result<()> {
        if x.channels() != self.channels {
            let mut expected = x.shape().to_vec();
            *expected.last_mut().unwrap() = self.channels;
            return Err(Error::ShapeMismatch { expected, got: x.shape().to_vec() });
        }
        Ok(())
    }

    fn running_inv_std(&self) -> Vec<S> {
        self.running_var.iter().map(|&v| S::one() / (v + S::lit(self.eps)).sqrt()).collect()
    }

    fn normalize(&self, x: &[S], mean: &[S], inv_std: &[S]) -> (Vec<S>, Vec<S>) {
        let c = self.channels;
        let mut xhat = Vec::with_capacity(x.len());
        let mut y = Vec::with_capacity(x.len());
        for (i, &v) in x.iter().enumerate() {
            let j = i % c;
            let h = (v - mean[j]) * inv_std[j];
            xhat.push(h);
            y.push(self.gamma.value[j] * h + self.beta.value[j]);
        }
        (xhat, y)
    }

    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check(x)?;
        let (_, y) = self.normalize(x.data(), &self.running_mean, &self.running_inv_std());
        Tensor::new(x.shape().to_vec(), y)
    }

    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        self.check(x)?;
        let c = self.channels;
        let (mean, inv_std) = match mode {
            Mode::Frozen => (self.running_mean.clone(), self.running_inv_std()),
            Mode::Train => {
                if x.batch() < 2 {
                    return Err(Error::BatchTooSmall);
                }
                let rows = x.len() / c;
                let mut sum = vec![0.0f64; c];
                let mut sq = vec![0.0f64; c];
                for (i, &v) in x.data().iter().enumerate() {
                    sum[i % c] += v.to_f64_lossy();
                }
                let mean: Vec<f64> = sum.iter().map(|s| s / rows as f64).collect();
                for (i, &v) in x.data().iter().enumerate() {
                    let d = v.to_f64_lossy() - mean[i % c];
                    sq[i % c] += d * d;
                }
                let var: Vec<f64> = sq.iter().map(|s| s / rows as f64).collect();
                let m = self.momentum;
                for j in 0..c {
                    self.running_mean[j] = S::lit(m * self.running_mean[j].to_f64_lossy() + (1.0 - m) * mean[j]);
                    self.running_var[j] = S::lit(m * self.running_var[j].to_f64_lossy() + (1.0 - m) * var[j]);
                }
                (
                    mean.iter().map(|&v| S::lit(v)).collect(),
                    var.iter().map(|&v| S::lit(1.0 / (v + self.eps).sqrt())).collect(),
                )
            }
        };
        let (xhat, y) = self.normalize(x.data(), &mean, &inv_std);
        self.cache = Some(BnCache { shape: x.shape().to_vec(), xhat, inv_std, batch_stats: mode == Mode::Train });
        Tensor::new(x.shape().to_vec(), y)
    }

    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let cache = self.cache.take().ok_or(Error::NoCache)?;
        grad.expect_shape(&cache.shape)?;
        let c = self.channels;
        let dy = grad.data();
        let rows = dy.len() / c;
        let mut sum_dy = vec![S::zero(); c];
        let mut sum_dy_xhat = vec![S::zero(); c];
        for (i, &g) in dy.iter().enumerate() {
            sum_dy[i % c] += g;
            sum_dy_xhat[i % c] += g * cache.xhat[i];
        }
        for j in 0..c {
            self.gamma.grad[j] += sum_dy_xhat[j];
            self.beta.grad[j] += sum_dy[j];
        }
        let mut dx = Vec::with_capacity(dy.len());
        if cache.batch_stats {
            let inv_n = S::lit(1.0 / rows as f64);
            for (i, &g) in dy.iter().enumerate() {
                let j = i % c;
                let scale = self.gamma.value[j] * cache.inv_std[j];
                dx.push(scale * (g - inv_n * sum_dy[j] - cache.xhat[i] * inv_n * sum_dy_xhat[j]));
            }
        } else {
            for (i, &g) in dy.iter().enumerate() {
                let j = i % c;
                dx.push(g * self.gamma.value[j] * cache.inv_std[j]);
            }
        }
        Tensor::new(cache.shape, dx)
    }
}

/// Fully connected layer `y = A·x + b` on `(batch, features)` tensors.
#[derive(Debug, Clone)]
pub struct Dense<S> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs × inputs`, row-major.
    pub weight: Param<S>,
    pub bias: Param<S>,
    cache: Option<Vec<S>>,
}

impl<S: Scalar> Dense<S> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            inputs,
            outputs,
            weight: Param::new(fan_in_uniform(inputs * outputs, inputs, rng)),
            bias: Param::new(vec![S::zero(); outputs]),
            cache: None,
        }
    }

    fn check(&self, x: &Tensor<S>) -> Result<usize> {
        match x.shape() {
            &[n, f] if f == self.inputs => Ok(n),
            s => Err(Error::ShapeMismatch { expected: vec![s.first().copied().unwrap_or(0), self.inputs], got: s.to_vec() }),
        }
    }

    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let n = self.check(x)?;
        let mut out = Vec::with_capacity(n * self.outputs);
        for _ in 0..n {
            out.extend_from_slice(&self.bias.value);
        }
        gemm(false, true, n, self.inputs, self.outputs, x.data(), &self.weight.value, S::one(), &mut out);
        Tensor::new(vec![n, self.outputs], out)
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let y = self.infer(x)?;
        self.cache = Some(x.data().to_vec());
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let x = self.cache.take().ok_or(Error::NoCache)?;
        let n = x.len() / self.inputs;
        grad.expect_shape(&[n, self.outputs])?;
        let dy = grad.data();
        gemm(true, false, self.outputs, n, self.inputs, dy, &x, S::one(), &mut self.weight.grad);
        for r in 0..n {
            for j in 0..self.outputs {
                self.bias.grad[j] += dy[r * self.outputs + j];
            }
        }
        let mut dx = vec![S::zero(); n * self.inputs];
        gemm(false, false, n, self.outputs, self.inputs, dy, &self.weight.value, S::zero(), &mut dx);
        Tensor::new(vec![n, self.inputs], dx)
    }
}

/// `y = x` for `x > 0`, `y = slope·x` otherwise.
#[derive(Debug, Clone)]
pub struct LeakyRelu<S> {
    pub slope: f64,
    cache: Option<Tensor<S>>,
}

impl<S: Scalar> LeakyRelu<S> {
    pub const SLOPE: f64 = 0.2;

    pub fn new(slope: f64) -> Self {
        Self { slope, cache: None }
    }

    pub fn infer(&self, x: &Tensor<S>) -> Tensor<S> {
        let a = S::lit(self.slope);
        x.map(|v| if v > S::zero() { v } else { a * v })
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        self.cache = Some(x.clone());
        self.infer(x)
    }

    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let x = self.cache.take().ok_or(Error::NoCache)?;
        grad.expect_shape(x.shape())?;
        let a = S::lit(self.slope);
        let d = x.data().iter().zip(grad.data()).map(|(&v, &g)| if v > S::zero() { g } else { a * g }).collect();
        Tensor::new(x.shape().to_vec(), d)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid<S> {
    cache: Option<Tensor<S>>,
}

impl<S: Scalar> Sigmoid<S> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn infer(&self, x: &Tensor<S>) -> Tensor<S> {
        x.map(|v| S::one() / (S::one() + (-v).exp()))
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let y = self.infer(x);
        self.cache = Some(y.clone());
        y
    }

    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let y = self.cache.take().ok_or(Error::NoCache)?;
        grad.expect_shape(y.shape())?;
        let d = y.data().iter().zip(grad.data()).map(|(&s, &g)| g * s * (S::one() - s)).collect();
        Tensor::new(y.shape().to_vec(), d)
    }
}

#[derive(Debug, Clone)]
pub enum Layer<S> {
    Conv(Conv<S>),
    BatchNorm(BatchNorm<S>),
    Dense(Dense<S>),
    LeakyRelu(LeakyRelu<S>),
    Sigmoid(Sigmoid<S>),
}

impl<S: Scalar> Layer<S> {
    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        match self {
            Layer::Conv(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Dense(l) => l.forward(x),
            Layer::LeakyRelu(l) => Ok(l.forward(x)),
            Layer::Sigmoid(l) => Ok(l.forward(x)),
        }
    }

    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            Layer::Conv(l) => l.backward(grad),
            Layer::BatchNorm(l) => l.backward(grad),
            Layer::Dense(l) => l.backward(grad),
            Layer::LeakyRelu(l) => l.backward(grad),
            Layer::Sigmoid(l) => l.backward(grad),
        }
    }

    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            Layer::Conv(l) => l.infer(x),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Dense(l) => l.infer(x),
            Layer::LeakyRelu(l) => Ok(l.infer(x)),
            Layer::Sigmoid(l) => Ok(l.infer(x)),
        }
    }

    pub fn params(&self) -> Vec<&Param<S>> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::LeakyRelu(_) | Layer::Sigmoid(_) => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::LeakyRelu(_) | Layer::Sigmoid(_) => vec![],
        }
    }

    /// Whether the layer holds trainable weights (convolutions and dense).
    pub fn is_trainable_layer(&self) -> bool {
        matches!(self, Layer::Conv(_) | Layer::Dense(_))
    }
}
