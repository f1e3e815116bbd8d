//! Dense N-dimensional arrays and the numeric kernels the rest of the
//! pipeline is built on: elementwise math, reductions, matrix product,
//! 2-d convolution (forward and backward), transposed convolution and
//! pooling.
//!
//! Layout is row-major everywhere; image batches are NCHW. Convolution
//! uses cross-correlation semantics (no kernel flip).

mod conv;
mod elem;
mod pool;

pub use conv::{conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward};
pub use elem::Elem;
pub use pool::{
    global_avg_pool, global_avg_pool_backward, max_pool2d, max_pool2d_backward, MaxPoolIndices,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("dimension mismatch in {context}: {lhs} vs {rhs}")]
    DimMismatch {
        context: &'static str,
        lhs: usize,
        rhs: usize,
    },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("cannot reshape {len} elements into shape {shape:?}")]
    BadReshape { len: usize, shape: Vec<usize> },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    BadBuffer { len: usize, shape: Vec<usize> },
    #[error("{context}: expected rank {expected}, got shape {got:?}")]
    BadRank {
        context: &'static str,
        expected: usize,
        got: Vec<usize>,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major tensor. An empty shape denotes a scalar backed by a
/// length-1 buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E: Elem> {
    shape: Vec<usize>,
    data: Vec<E>,
}

impl<E: Elem> Tensor<E> {
    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(TensorError::BadBuffer {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![E::zero(); len],
        }
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        let len: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: E) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// Flat offset of a multi-index, bounds-checked.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(TensorError::DimMismatch {
                context: "offset",
                lhs: index.len(),
                rhs: self.shape.len(),
            });
        }
        let mut off = 0;
        for (i, (&ix, &ext)) in index.iter().zip(&self.shape).enumerate() {
            if ix >= ext {
                return Err(TensorError::Invalid(format!(
                    "index {ix} out of bounds for extent {ext} in dimension {i}"
                )));
            }
            off = off * ext + ix;
        }
        Ok(off)
    }

    pub fn at(&self, index: &[usize]) -> Result<E> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: E) -> Result<()> {
        let off = self.offset(index)?;
        self.data[off] = value;
        Ok(())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(TensorError::BadReshape {
                len: self.data.len(),
                shape: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip(&self, other: &Self, context: &'static str, f: impl Fn(E, E) -> E) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                context,
                expected: self.shape.clone(),
                got: other.shape.clone(),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn mul_scalar(&self, s: E) -> Self {
        self.map(|x| x * s)
    }

    pub fn add_scalar(&self, s: E) -> Self {
        self.map(|x| x + s)
    }

    /// In-place accumulate, shapes must match.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                context: "add_assign",
                expected: self.shape.clone(),
                got: other.shape.clone(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn relu(&self) -> Self {
        self.map(|x| if x > E::zero() { x } else { E::zero() })
    }

    /// Gradient of relu at `self` (the forward input) applied to `grad_out`.
    pub fn relu_backward(&self, grad_out: &Self) -> Result<Self> {
        self.zip(grad_out, "relu_backward", |x, g| {
            if x > E::zero() {
                g
            } else {
                E::zero()
            }
        })
    }

    pub fn sigmoid(&self) -> Self {
        self.map(|x| E::one() / (E::one() + (-x).exp()))
    }

    /// Gradient of sigmoid given the forward *output* `y`: g · y · (1 − y).
    pub fn sigmoid_backward_from_output(&self, grad_out: &Self) -> Result<Self> {
        self.zip(grad_out, "sigmoid_backward", |y, g| {
            g * y * (E::one() - y)
        })
    }

    pub fn sum_all(&self) -> E {
        self.data.iter().fold(E::zero(), |acc, &x| acc + x)
    }

    pub fn mean_all(&self) -> E {
        self.sum_all() / E::from_usize(self.data.len())
    }

    /// Sum over one axis, removing it from the shape.
    pub fn sum_axis(&self, axis: usize) -> Result<Self> {
        if axis >= self.shape.len() {
            return Err(TensorError::AxisOutOfRange {
                axis,
                rank: self.shape.len(),
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let extent = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out_shape = self.shape.clone();
        out_shape.remove(axis);
        let mut out = vec![E::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..extent {
                let base = (o * extent + a) * inner;
                let obase = o * inner;
                for i in 0..inner {
                    out[obase + i] = out[obase + i] + self.data[base + i];
                }
            }
        }
        Tensor::from_vec(&out_shape, out)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Self> {
        let extent = *self
            .shape
            .get(axis)
            .ok_or(TensorError::AxisOutOfRange {
                axis,
                rank: self.shape.len(),
            })?;
        Ok(self.sum_axis(axis)?.mul_scalar(E::one() / E::from_usize(extent)))
    }

    /// 2-d matrix transpose.
    pub fn transpose2d(&self) -> Result<Self> {
        let [m, n] = self.dims2("transpose2d")?;
        let mut out = vec![E::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::from_vec(&[n, m], out)
    }

    /// Zero-pad the two trailing spatial dims of an NCHW tensor.
    pub fn pad2d(&self, pad_h: usize, pad_w: usize) -> Result<Self> {
        let [n, c, h, w] = self.dims4("pad2d")?;
        let (oh, ow) = (h + 2 * pad_h, w + 2 * pad_w);
        let mut out = vec![E::zero(); n * c * oh * ow];
        for nc in 0..n * c {
            let src = nc * h * w;
            let dst = nc * oh * ow;
            for y in 0..h {
                let srow = src + y * w;
                let drow = dst + (y + pad_h) * ow + pad_w;
                out[drow..drow + w].copy_from_slice(&self.data[srow..srow + w]);
            }
        }
        Tensor::from_vec(&[n, c, oh, ow], out)
    }

    /// Crop the two trailing spatial dims of an NCHW tensor.
    pub fn crop2d(&self, top: usize, left: usize, out_h: usize, out_w: usize) -> Result<Self> {
        let [n, c, h, w] = self.dims4("crop2d")?;
        if top + out_h > h || left + out_w > w {
            return Err(TensorError::Invalid(format!(
                "crop window {out_h}x{out_w} at ({top},{left}) exceeds input {h}x{w}"
            )));
        }
        let mut out = vec![E::zero(); n * c * out_h * out_w];
        for nc in 0..n * c {
            let src = nc * h * w;
            let dst = nc * out_h * out_w;
            for y in 0..out_h {
                let srow = src + (top + y) * w + left;
                let drow = dst + y * out_w;
                out[drow..drow + out_w].copy_from_slice(&self.data[srow..srow + out_w]);
            }
        }
        Tensor::from_vec(&[n, c, out_h, out_w], out)
    }

    /// Standard matrix product for rank-2 tensors, backed by a tuned gemm.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let [m, k] = self.dims2("matmul lhs")?;
        let [k2, n] = other.dims2("matmul rhs")?;
        if k != k2 {
            return Err(TensorError::DimMismatch {
                context: "matmul inner dimensions",
                lhs: k,
                rhs: k2,
            });
        }
        let mut out = vec![E::zero(); m * n];
        E::gemm(m, k, n, &self.data, &other.data, &mut out);
        Tensor::from_vec(&[m, n], out)
    }

    pub(crate) fn dims2(&self, context: &'static str) -> Result<[usize; 2]> {
        match self.shape[..] {
            [a, b] => Ok([a, b]),
            _ => Err(TensorError::BadRank {
                context,
                expected: 2,
                got: self.shape.clone(),
            }),
        }
    }

    pub(crate) fn dims4(&self, context: &'static str) -> Result<[usize; 4]> {
        match self.shape[..] {
            [a, b, c, d] => Ok([a, b, c, d]),
            _ => Err(TensorError::BadRank {
                context,
                expected: 4,
                got: self.shape.clone(),
            }),
        }
    }

    /// Cast element type, used when freezing f32 checkpoints from f64 runs
    /// and vice versa.
    pub fn cast<F: Elem>(&self) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| F::from_f64(x.to_f64())).collect(),
        }
    }
}
