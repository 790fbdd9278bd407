//! Dense m-way tensors in a fixed linearization.
//!
//! Entries are stored with the LAST mode varying fastest, so for an order-3
//! tensor `offset(i₁,i₂,i₃) = (i₁·d₂ + i₂)·d₃ + i₃` (0-based). The mode-j
//! unfolding enumerates the remaining indices in the same order, which makes
//! the mode-1 unfolding of an order-3 tensor put `[T]_{i₁,i₂,i₃}` in column
//! `i₂·d₃ + i₃`. Consequently
//!
//! ```text
//! M_j(C ×₁ U₁ ⋯ ×_m U_m) = U_j · M_j(C) · (U_1 ⊗ ⋯ ⊗ U_{j-1} ⊗ U_{j+1} ⊗ ⋯ ⊗ U_m)ᵀ
//! ```
//!
//! with the Kronecker factors in ascending mode order.
//!
//! Modes are 0-based in the API; error messages report them 1-based.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Dimensions `d₁ × ⋯ × d_m` of an order-m tensor (m ≥ 2).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
    numel: usize,
}

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidShape(format!(
                "order must be at least 2, got {}",
                dims.len()
            )));
        }
        if let Some(p) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidShape(format!("dimension {} is zero", p + 1)));
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidShape(format!("{dims:?} overflows the index range")))?;
        Ok(Shape { dims, numel })
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    #[inline]
    pub fn dim(&self, mode: usize) -> usize {
        self.dims[mode]
    }

    /// d* = Π d_j.
    #[inline]
    pub fn numel(&self) -> usize {
        self.numel
    }

    /// d_{-j} = d*/d_j.
    pub fn numel_except(&self, mode: usize) -> usize {
        self.numel / self.dims[mode]
    }

    /// d̄ = max_j d_j.
    pub fn max_dim(&self) -> usize {
        *self.dims.iter().max().expect("order >= 2")
    }

    /// d̲ = min_j d_j.
    pub fn min_dim(&self) -> usize {
        *self.dims.iter().min().expect("order >= 2")
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            Err(Error::ModeOutOfRange { mode: mode + 1, order: self.order() })
        } else {
            Ok(())
        }
    }

    /// Shape with `dims[mode]` replaced.
    pub fn with_dim(&self, mode: usize, dim: usize) -> Result<Shape> {
        self.check_mode(mode)?;
        let mut dims = self.dims.clone();
        dims[mode] = dim;
        Shape::new(dims)
    }

    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.order() {
            return Err(Error::DimensionMismatch(format!(
                "index of length {} for an order-{} tensor",
                index.len(),
                self.order()
            )));
        }
        let mut off = 0usize;
        for (j, (&i, &d)) in index.iter().zip(&self.dims).enumerate() {
            if i >= d {
                return Err(Error::DimensionMismatch(format!(
                    "index {} in mode {} exceeds dimension {d}",
                    i + 1,
                    j + 1
                )));
            }
            off = off * d + i;
        }
        Ok(off)
    }

    /// Multi-index of a linear offset, written into `out`.
    pub fn unravel_into(&self, mut offset: usize, out: &mut [usize]) {
        for j in (0..self.order()).rev() {
            let d = self.dims[j];
            out[j] = offset % d;
            offset /= d;
        }
    }

    pub fn unravel(&self, offset: usize) -> Vec<usize> {
        let mut out = vec![0; self.order()];
        self.unravel_into(offset, &mut out);
        out
    }

    /// (Π_{k<mode} d_k, d_mode, Π_{k>mode} d_k).
    fn split(&self, mode: usize) -> (usize, usize, usize) {
        let left = self.dims[..mode].iter().product();
        let right = self.dims[mode + 1..].iter().product();
        (left, self.dims[mode], right)
    }
}

/// Dense tensor with finite entries in canonical linearization.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::DimensionMismatch(format!(
                "shape {:?} needs {} entries, got {}",
                shape.dims(),
                shape.numel(),
                data.len()
            )));
        }
        if let Some(p) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor entry {:?}", one_based(&shape.unravel(p)))));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.numel();
        DenseTensor { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        let n = shape.numel();
        DenseTensor { shape, data: vec![value; n] }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut idx = vec![0; shape.order()];
        let data = (0..shape.numel())
            .map(|o| {
                shape.unravel_into(o, &mut idx);
                f(&idx)
            })
            .collect();
        DenseTensor { shape, data }
    }

    /// One-hot tensor `e_{i₁} ∘ ⋯ ∘ e_{i_m}`.
    pub fn one_hot(shape: Shape, index: &[usize]) -> Result<Self> {
        let off = shape.offset(index)?;
        let mut t = DenseTensor::zeros(shape);
        t.data[off] = 1.0;
        Ok(t)
    }

    #[inline]
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.shape.offset(index)?])
    }

    /// Mode-`mode` unfolding `M_mode(T)`, a `d_mode × d_{-mode}` matrix.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        self.shape.check_mode(mode)?;
        let (left, d, right) = self.shape.split(mode);
        let cols = left * right;
        let mut out = vec![0.0; d * cols];
        for l in 0..left {
            for i in 0..d {
                let src = &self.data[(l * d + i) * right..(l * d + i + 1) * right];
                let dst = &mut out[i * cols + l * right..i * cols + (l + 1) * right];
                dst.copy_from_slice(src);
            }
        }
        Matrix::new(d, cols, out)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(m: &Matrix, mode: usize, shape: &Shape) -> Result<DenseTensor> {
        shape.check_mode(mode)?;
        let (left, d, right) = shape.split(mode);
        if m.rows() != d || m.cols() != left * right {
            return Err(Error::DimensionMismatch(format!(
                "cannot fold a {}x{} matrix along mode {} of shape {:?}",
                m.rows(),
                m.cols(),
                mode + 1,
                shape.dims()
            )));
        }
        let cols = left * right;
        let src = m.data();
        let mut data = vec![0.0; shape.numel()];
        for l in 0..left {
            for i in 0..d {
                data[(l * d + i) * right..(l * d + i + 1) * right]
                    .copy_from_slice(&src[i * cols + l * right..i * cols + (l + 1) * right]);
            }
        }
        DenseTensor::new(shape.clone(), data)
    }

    /// Marginal product `T ×_mode A` with `A` of size `p × d_mode`.
    pub fn mode_product(&self, mode: usize, a: &Matrix) -> Result<DenseTensor> {
        self.shape.check_mode(mode)?;
        let (left, d, right) = self.shape.split(mode);
        if a.cols() != d {
            return Err(Error::DimensionMismatch(format!(
                "mode-{} product needs {} columns, matrix has {}",
                mode + 1,
                d,
                a.cols()
            )));
        }
        let p = a.rows();
        let shape = self.shape.with_dim(mode, p)?;
        let mut out = vec![0.0; left * p * right];
        for l in 0..left {
            for q in 0..p {
                let dst = &mut out[(l * p + q) * right..(l * p + q + 1) * right];
                for i in 0..d {
                    let w = a.get(q, i);
                    if w == 0.0 {
                        continue;
                    }
                    let src = &self.data[(l * d + i) * right..(l * d + i + 1) * right];
                    for (o, s) in dst.iter_mut().zip(src) {
                        *o += w * s;
                    }
                }
            }
        }
        Ok(DenseTensor { shape, data: out })
    }

    /// Marginal product with `Aᵀ` (`A` is `d_mode × p`) without forming the transpose.
    pub fn mode_product_t(&self, mode: usize, a: &Matrix) -> Result<DenseTensor> {
        self.mode_product(mode, &a.transpose())
    }

    /// Applies `×_j A_j` for every `Some` entry, in ascending mode order.
    pub fn multi_mode_product(&self, mats: &[Option<&Matrix>]) -> Result<DenseTensor> {
        if mats.len() != self.shape.order() {
            return Err(Error::DimensionMismatch(format!(
                "{} matrices for an order-{} tensor",
                mats.len(),
                self.shape.order()
            )));
        }
        let mut cur: Option<DenseTensor> = None;
        for (j, m) in mats.iter().enumerate() {
            if let Some(m) = m {
                let next = cur.as_ref().unwrap_or(self).mode_product(j, m)?;
                cur = Some(next);
            }
        }
        Ok(cur.unwrap_or_else(|| self.clone()))
    }

    pub fn inner(&self, other: &DenseTensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norms(&self) -> TensorNorms {
        TensorNorms {
            frobenius: self.frobenius_norm(),
            l1: self.data.iter().map(|v| v.abs()).sum(),
            linf: self.data.iter().fold(0.0, |a, v| a.max(v.abs())),
        }
    }

    pub fn hadamard(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(DenseTensor { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(DenseTensor { shape: self.shape.clone(), data })
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(DenseTensor { shape: self.shape.clone(), data })
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseTensor) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> DenseTensor {
        DenseTensor { shape: self.shape.clone(), data: self.data.iter().map(|v| v * s).collect() }
    }

    /// Outer product `v₁ ∘ ⋯ ∘ v_m`.
    pub fn outer(vectors: &[Vec<f64>]) -> Result<DenseTensor> {
        let shape = Shape::new(vectors.iter().map(Vec::len).collect())?;
        let mut data = vec![1.0];
        for v in vectors {
            let mut next = Vec::with_capacity(data.len() * v.len());
            for a in &data {
                for b in v {
                    next.push(a * b);
                }
            }
            data = next;
        }
        DenseTensor::new(shape, data)
    }

    fn check_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.dims().to_vec(),
                right: other.shape.dims().to_vec(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TensorNorms {
    pub frobenius: f64,
    pub l1: f64,
    pub linf: f64,
}

/// Contracts every mode of `t` with a vector: `Σ_ω [t]_ω Π_j v_j[ω_j]`.
pub fn contract_vectors(t: &DenseTensor, vecs: &[&[f64]]) -> f64 {
    let dims = t.shape().dims();
    debug_assert_eq!(vecs.len(), dims.len());
    let mut buf: Vec<f64> = t.data().to_vec();
    let mut len = buf.len();
    for j in (0..dims.len()).rev() {
        let d = dims[j];
        let v = vecs[j];
        let outer = len / d;
        for o in 0..outer {
            let s: f64 = buf[o * d..(o + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum();
            buf[o] = s;
        }
        len = outer;
    }
    buf[0]
}

/// Converts a 0-based multi-index to 1-based for messages and files.
pub fn one_based(index: &[usize]) -> Vec<usize> {
    index.iter().map(|i| i + 1).collect()
}
