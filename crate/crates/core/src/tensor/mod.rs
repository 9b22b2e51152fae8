//! Dense 4-D tensor and the differentiable operators built on it.
//!
//! Every operator comes in a forward/backward pair with the backward pass
//! written out by hand; there is no autodiff graph. Tensors are immutable
//! values once constructed and all operators are pure functions, so
//! concurrent use needs no locking.

mod activation;
mod conv;
mod filter;
mod norm;

pub use activation::{activation, activation_backward, Activation};
pub use conv::{
    conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward,
    conv_transpose2d_backward_padded, conv_transpose2d_padded, ConvGrads, ConvParams,
    TransposeGrads,
};
pub(crate) use conv::transpose_out_size;
pub use filter::{
    box_filter3, box_filter3_backward, resize, resize_backward, ResizeMode,
};
pub use norm::{instance_norm, instance_norm_backward, InstanceNormGrads};

use crate::error::{MopeError, Result};

/// Shape of a 4-D tensor: (batch, channels, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense row-major (n, c, h, w) tensor of `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    /// Build from raw data; the length must equal `n*c*h*w`.
    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(MopeError::Shape(format!(
                "data length {} does not match shape {} ({} values)",
                data.len(),
                shape,
                shape.numel()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    /// Build by evaluating `f(n, c, y, x)` at every position.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut f32 {
        let i = self.index(n, c, y, x);
        &mut self.data[i]
    }

    /// One (sample, channel) plane as a contiguous slice.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let hw = self.shape.h * self.shape.w;
        let start = (n * self.shape.c + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let hw = self.shape.h * self.shape.w;
        let start = (n * self.shape.c + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// Extract sample `n` as a (1, c, h, w) tensor.
    pub fn sample(&self, n: usize) -> Tensor {
        let per = self.shape.c * self.shape.h * self.shape.w;
        Tensor {
            shape: Shape::new(1, self.shape.c, self.shape.h, self.shape.w),
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    /// Stack single-sample tensors of identical (c, h, w) into one batch.
    pub fn stack(samples: &[Tensor]) -> Result<Tensor> {
        let first = samples
            .first()
            .ok_or_else(|| MopeError::Shape("cannot stack an empty list".into()))?;
        let s = first.shape;
        let mut data = Vec::with_capacity(samples.len() * s.c * s.h * s.w);
        for (i, t) in samples.iter().enumerate() {
            if t.shape.c != s.c || t.shape.h != s.h || t.shape.w != s.w || t.shape.n != 1 {
                return Err(MopeError::Shape(format!(
                    "stack: sample {i} has shape {}, expected (1, {}, {}, {})",
                    t.shape, s.c, s.h, s.w
                )));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: Shape::new(samples.len(), s.c, s.h, s.w),
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Mean of all elements, accumulated at f64.
    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Elementwise sum; shapes must match exactly.
pub fn elementwise_add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape != b.shape {
        return Err(MopeError::Shape(format!(
            "add: left {} vs right {}",
            a.shape, b.shape
        )));
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| x + y)
        .collect();
    Ok(Tensor {
        shape: a.shape,
        data,
    })
}

/// Backward of `elementwise_add`: the upstream gradient flows unchanged to
/// both operands.
pub fn elementwise_add_backward(grad_out: &Tensor) -> (Tensor, Tensor) {
    (grad_out.clone(), grad_out.clone())
}

/// Concatenate along the channel axis; (n, h, w) must match.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.n != b.shape.n || a.shape.h != b.shape.h || a.shape.w != b.shape.w {
        return Err(MopeError::Shape(format!(
            "concat: left {} vs right {} (n, h, w must match)",
            a.shape, b.shape
        )));
    }
    let shape = Shape::new(a.shape.n, a.shape.c + b.shape.c, a.shape.h, a.shape.w);
    let mut out = Tensor::zeros(shape);
    for n in 0..shape.n {
        for c in 0..a.shape.c {
            out.plane_mut(n, c).copy_from_slice(a.plane(n, c));
        }
        for c in 0..b.shape.c {
            out.plane_mut(n, a.shape.c + c).copy_from_slice(b.plane(n, c));
        }
    }
    Ok(out)
}

/// Backward of `concat_channels`: split the gradient at `c_left`.
pub fn concat_channels_backward(grad_out: &Tensor, c_left: usize) -> Result<(Tensor, Tensor)> {
    let s = grad_out.shape;
    if c_left > s.c {
        return Err(MopeError::Shape(format!(
            "concat backward: split at channel {c_left} but gradient has only {} channels",
            s.c
        )));
    }
    let mut left = Tensor::zeros(Shape::new(s.n, c_left, s.h, s.w));
    let mut right = Tensor::zeros(Shape::new(s.n, s.c - c_left, s.h, s.w));
    for n in 0..s.n {
        for c in 0..c_left {
            left.plane_mut(n, c).copy_from_slice(grad_out.plane(n, c));
        }
        for c in c_left..s.c {
            right
                .plane_mut(n, c - c_left)
                .copy_from_slice(grad_out.plane(n, c));
        }
    }
    Ok((left, right))
}

/// y[i] += a * x[i]; the slices must be the same length.
#[inline]
pub(crate) fn axpy(y: &mut [f32], a: f32, x: &[f32]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * *xi;
    }
}

/// Dot product with eight partial accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut s: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for v in acc {
        s += v;
    }
    s
}
