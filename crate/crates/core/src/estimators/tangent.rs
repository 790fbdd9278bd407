//! Tangent space of the fixed multilinear-rank manifold at a Tucker point.
//!
//! A tangent vector at `T = C ×₁ U₁ ⋯ ×_m U_m` has the form
//! `D ×₁ U₁ ⋯ ×_m U_m + Σ_j C ×_{k≠j} U_k ×_j W_j` with `U_jᵀW_j = 0`.
//! It is stored in that factored form so projections of sparse tensors and
//! retractions never touch all `d*` cells.

use crate::error::{Error, Result};
use crate::linalg::{normalize_column_signs, orthonormal_basis, pseudo_inverse};
use crate::matrix::Matrix;
use crate::tensor::{contract_vectors, DenseTensor, Shape};
use crate::tucker::{hosvd, TuckerFactorization};

/// Relative singular-value cutoff for the core pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-12;

/// Factored tangent vector `{D, W_1, …, W_m}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub d: DenseTensor,
    pub w: Vec<Matrix>,
}

/// Precomputed data for projecting onto the tangent space at one point.
#[derive(Clone, Debug)]
pub struct TangentSpace {
    base: TuckerFactorization,
    shape: Shape,
    /// `M_j(C)†`, of size `r_{-j} × r_j`.
    core_pinv: Vec<Matrix>,
    /// `M_j(C) M_j(C)ᵀ`.
    core_gram: Vec<Matrix>,
}

impl TangentSpace {
    pub fn new(base: &TuckerFactorization) -> Result<Self> {
        let mut core_pinv = Vec::with_capacity(base.order());
        let mut core_gram = Vec::with_capacity(base.order());
        for j in 0..base.order() {
            let cj = base.core().unfold(j)?;
            let (pinv, ratio) = pseudo_inverse(&cj, PINV_CUTOFF)?;
            if cj.frobenius_norm() == 0.0 {
                return Err(Error::ZeroCore);
            }
            if ratio < PINV_CUTOFF {
                return Err(Error::IllConditioned { mode: j + 1, ratio });
            }
            core_pinv.push(pinv);
            core_gram.push(cj.gram_rows());
        }
        Ok(TangentSpace { shape: base.shape(), base: base.clone(), core_pinv, core_gram })
    }

    pub fn base(&self) -> &TuckerFactorization {
        &self.base
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Projection of a dense ambient tensor.
    pub fn project_dense(&self, g: &DenseTensor) -> Result<TangentVector> {
        if g.shape() != &self.shape {
            return Err(Error::ShapeMismatch { left: g.shape().dims().to_vec(), right: self.shape.dims().to_vec() });
        }
        let m = self.base.order();
        let factors = self.base.factors();
        let ut: Vec<Matrix> = factors.iter().map(Matrix::transpose).collect();
        let mut a = Vec::with_capacity(m);
        let mut d = None;
        for j in 0..m {
            let mats: Vec<Option<&Matrix>> = (0..m).map(|k| if k == j { None } else { Some(&ut[k]) }).collect();
            let b = g.multi_mode_product(&mats)?;
            if j == 0 {
                d = Some(b.mode_product(0, &ut[0])?);
            }
            a.push(b.unfold(j)?);
        }
        self.finish(d.expect("order >= 2"), a)
    }

    /// Projection of `Σ_i w_i e_{offset_i}`.
    pub fn project_sparse(&self, entries: &[(usize, f64)]) -> Result<TangentVector> {
        let (d, a) = self.compress_sparse(entries)?;
        self.finish(d, a)
    }

    /// For `g = Σ_i w_i e_{offset_i}`: the full compression `g ×_k U_kᵀ` and,
    /// per mode j, `M_j(g ×_{k≠j} U_kᵀ)` of size `d_j × r_{-j}`.
    pub fn compress_sparse(&self, entries: &[(usize, f64)]) -> Result<(DenseTensor, Vec<Matrix>)> {
        let m = self.base.order();
        let factors = self.base.factors();
        let core_shape = self.base.core().shape().clone();
        let mut d = DenseTensor::zeros(core_shape.clone());
        let mut a: Vec<Matrix> =
            (0..m).map(|j| Matrix::zeros(self.shape.dim(j), core_shape.numel_except(j))).collect();
        let mut idx = vec![0usize; m];
        let mut kron = Vec::new();
        for &(offset, w) in entries {
            if offset >= self.shape.numel() {
                return Err(Error::InvalidArgument(format!("offset {offset} out of range")));
            }
            if w == 0.0 {
                continue;
            }
            self.shape.unravel_into(offset, &mut idx);
            let rows: Vec<&[f64]> = factors.iter().zip(&idx).map(|(u, &i)| u.row(i)).collect();
            kron_rows(&rows, None, &mut kron);
            for (o, k) in d.data_mut().iter_mut().zip(&kron) {
                *o += w * k;
            }
            for j in 0..m {
                kron_rows(&rows, Some(j), &mut kron);
                let i = idx[j];
                for (c, k) in kron.iter().enumerate() {
                    let v = a[j].get(i, c);
                    a[j].set(i, c, v + w * k);
                }
            }
        }
        Ok((d, a))
    }

    fn finish(&self, d: DenseTensor, a: Vec<Matrix>) -> Result<TangentVector> {
        let mut w = Vec::with_capacity(a.len());
        for (j, aj) in a.into_iter().enumerate() {
            let u = self.base.factor(j);
            let perp = aj.sub(&u.matmul(&u.t_matmul(&aj)?)?)?;
            w.push(perp.matmul(&self.core_pinv[j])?);
        }
        Ok(TangentVector { d, w })
    }

    /// Dense ambient representation of a tangent vector.
    pub fn to_dense(&self, xi: &TangentVector) -> Result<DenseTensor> {
        let m = self.base.order();
        let factors = self.base.factors();
        let all: Vec<Option<&Matrix>> = factors.iter().map(Some).collect();
        let mut out = xi.d.multi_mode_product(&all)?;
        for j in 0..m {
            let mats: Vec<Option<&Matrix>> =
                (0..m).map(|k| Some(if k == j { &xi.w[j] } else { &factors[k] })).collect();
            out.axpy(1.0, &self.base.core().multi_mode_product(&mats)?)?;
        }
        Ok(out)
    }

    /// Single ambient entry of a tangent vector.
    pub fn entry(&self, xi: &TangentVector, index: &[usize]) -> f64 {
        let factors = self.base.factors();
        let mut rows: Vec<&[f64]> = factors.iter().zip(index).map(|(u, &i)| u.row(i)).collect();
        let mut s = contract_vectors(&xi.d, &rows);
        for j in 0..rows.len() {
            let keep = rows[j];
            rows[j] = xi.w[j].row(index[j]);
            s += contract_vectors(self.base.core(), &rows);
            rows[j] = keep;
        }
        s
    }

    /// Ambient inner product of two tangent vectors at this point.
    pub fn inner(&self, x: &TangentVector, y: &TangentVector) -> Result<f64> {
        let mut s = x.d.inner(&y.d)?;
        for j in 0..x.w.len() {
            // tr(Xᵀ Y G) with G = M_j(C)M_j(C)ᵀ
            let xty = x.w[j].t_matmul(&y.w[j])?;
            let g = &self.core_gram[j];
            for a in 0..xty.rows() {
                for b in 0..xty.cols() {
                    s += xty.get(a, b) * g.get(b, a);
                }
            }
        }
        Ok(s)
    }

    pub fn norm(&self, x: &TangentVector) -> Result<f64> {
        Ok(self.inner(x, x)?.max(0.0).sqrt())
    }

    /// `HOSVD_r(T + step·ξ)` computed in the span of `[U_j, W_j]`.
    pub fn retract(&self, xi: &TangentVector, step: f64) -> Result<TuckerFactorization> {
        let m = self.base.order();
        let factors = self.base.factors();
        let core = self.base.core();
        let mut q = Vec::with_capacity(m);
        let mut qu = Vec::with_capacity(m);
        let mut qw = Vec::with_capacity(m);
        for j in 0..m {
            let qj = orthonormal_basis(&factors[j].hstack(&xi.w[j])?, 1e-10)?;
            qu.push(qj.t_matmul(&factors[j])?);
            qw.push(qj.t_matmul(&xi.w[j])?);
            q.push(qj);
        }
        let mut shifted = core.clone();
        shifted.axpy(step, &xi.d)?;
        let all: Vec<Option<&Matrix>> = qu.iter().map(Some).collect();
        let mut g = shifted.multi_mode_product(&all)?;
        if step != 0.0 {
            for j in 0..m {
                let mats: Vec<Option<&Matrix>> = (0..m).map(|k| Some(if k == j { &qw[j] } else { &qu[k] })).collect();
                g.axpy(step, &core.multi_mode_product(&mats)?)?;
            }
        }
        let small = hosvd(&g, &self.base.rank())?;
        let (small_core, v) = small.into_parts();
        let mut new_factors = Vec::with_capacity(m);
        for j in 0..m {
            new_factors.push(q[j].matmul(&v[j])?);
        }
        let mut out = TuckerFactorization::from_parts_unchecked(small_core, new_factors)?;
        out.normalize_signs();
        Ok(out)
    }
}

/// Kronecker product of the given rows in ascending mode order, last fastest,
/// optionally skipping one mode.
pub(crate) fn kron_rows(rows: &[&[f64]], skip: Option<usize>, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    let mut next = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        if Some(k) == skip {
            continue;
        }
        next.clear();
        for a in out.iter() {
            for b in r.iter() {
                next.push(a * b);
            }
        }
        std::mem::swap(out, &mut next);
    }
}

/// Orthogonal projection of `g` onto the tangent space at `f`.
pub fn tangent_project_at(f: &TuckerFactorization, g: &DenseTensor) -> Result<DenseTensor> {
    let space = TangentSpace::new(f)?;
    let xi = space.project_dense(g)?;
    space.to_dense(&xi)
}

/// Flips factor signs like [`TuckerFactorization::normalize_signs`]; used on raw
/// eigenvector bases.
pub(crate) fn sign_normalized(mut u: Matrix) -> Matrix {
    normalize_column_signs(&mut u);
    u
}
