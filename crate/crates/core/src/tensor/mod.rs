//! Dense rank-4 tensors and the forward/backward kernels the segmentation
//! network is assembled from.
//!
//! Every layer is a pair of free functions: `*_forward` computes the output
//! from its inputs and `*_backward` maps an output gradient back to input and
//! parameter gradients. There is no autograd tape; the network module wires
//! the backward calls in reverse order itself.

mod conv;
mod gradcheck;
mod io;
mod join;
mod pool;
mod real;
mod relu;

pub use conv::{
    conv2d_backward, conv2d_forward, conv_transpose2d_backward, conv_transpose2d_forward,
    upsample2x_backward, upsample2x_forward, upsample_scale, upsample_to_backward,
    upsample_to_forward, ConvGrads, ConvSpec, UpsampleSpec,
};
pub use gradcheck::{grad_check, grad_check_scalar, sample_coords, GradCheckReport};
pub use io::{read_tensors, write_tensors};
pub use join::{concat_channels, concat_channels_backward, sum_elementwise, sum_elementwise_backward};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, PoolIndices};
pub use real::Real;
pub use relu::{relu_backward, relu_forward};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid layer spec: {0}")]
    Spec(String),
    #[error("tensor file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// `(batch, channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one `(c, h, w)` sample.
    pub const fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Row-major NCHW tensor with an optional gradient buffer of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![T::zero(); shape.len()], grad: None }
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Self { shape, data: vec![value; shape.len()], grad: None }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(TensorError::Shape {
                op: "from_vec",
                detail: format!("{} values for shape {shape}", data.len()),
            });
        }
        Ok(Self { shape, data, grad: None })
    }

    /// Standard-normal samples scaled by `std`.
    pub fn randn<R: Rng + ?Sized>(shape: Shape, std: f64, rng: &mut R) -> Self {
        let data = (0..shape.len())
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::from_f64(z * std)
            })
            .collect();
        Self { shape, data, grad: None }
    }

    pub fn uniform<R: Rng + ?Sized>(shape: Shape, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..shape.len()).map(|_| T::from_f64(rng.random_range(lo..hi))).collect();
        Self { shape, data, grad: None }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let s = self.shape.sample_len();
        &self.data[n * s..(n + 1) * s]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let s = self.shape.sample_len();
        &mut self.data[n * s..(n + 1) * s]
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> &mut [T] {
        let len = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); len])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn take_grad(&mut self) -> Option<Vec<T>> {
        self.grad.take()
    }

    /// Adds `g` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &Tensor<T>) -> Result<()> {
        if g.shape != self.shape {
            return Err(TensorError::Shape {
                op: "accumulate_grad",
                detail: format!("{} into {}", g.shape, self.shape),
            });
        }
        for (a, &b) in self.grad_mut().iter_mut().zip(&g.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.len() != self.shape.len() {
            return Err(TensorError::Shape {
                op: "reshape",
                detail: format!("{} to {shape}", self.shape),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect(), grad: None }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    /// Elementwise `self + k * other`.
    pub fn add_scaled(&self, other: &Tensor<T>, k: T) -> Result<Self> {
        if other.shape != self.shape {
            return Err(TensorError::Shape {
                op: "add_scaled",
                detail: format!("{} vs {}", self.shape, other.shape),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + k * b).collect();
        Ok(Self { shape: self.shape, data, grad: None })
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of channels `start..start + count`.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Self> {
        let s = self.shape;
        if start + count > s.c {
            return Err(TensorError::Shape {
                op: "slice_channels",
                detail: format!("channels {start}..{} of {s}", start + count),
            });
        }
        let out_shape = Shape::new(s.n, count, s.h, s.w);
        let plane = s.plane();
        let mut data = Vec::with_capacity(out_shape.len());
        for n in 0..s.n {
            let base = (n * s.c + start) * plane;
            data.extend_from_slice(&self.data[base..base + count * plane]);
        }
        Ok(Self { shape: out_shape, data, grad: None })
    }

    /// Converts between scalar types (used to run f32 models in f64 checks).
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(Real::to_f64(*v))).collect(),
            grad: self.grad.as_ref().map(|g| g.iter().map(|v| U::from_f64(Real::to_f64(*v))).collect()),
        }
    }
}

pub(crate) fn expect_shape(op: &'static str, got: Shape, want: Shape) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(TensorError::Shape { op, detail: format!("expected {want}, got {got}") })
    }
}
