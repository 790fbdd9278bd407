//! Symmetric eigensolver and the truncated SVDs built on top of it.
//!
//! Singular subspaces are obtained from the eigendecomposition of the Gram
//! matrix on the smaller side of the input. Unfoldings are `d_j × d_{-j}` with
//! `d_{-j}` large, so this costs `O(d_j² d_{-j})` instead of a full SVD.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const JACOBI_MAX_SWEEPS: usize = 30;
const JACOBI_REL_TOL: f64 = 1e-13;

/// Eigenpairs of a symmetric matrix, eigenvalues in nonincreasing order.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: Matrix,
    pub sweeps: usize,
}

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps until the off-diagonal Frobenius mass drops below `1e-13·‖A‖_F`
/// (at most 30 sweeps). Eigenpairs are sorted by descending eigenvalue; exact
/// ties keep ascending diagonal position.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch(format!("eigensolver needs a square matrix, got {}x{}", n, a.cols())));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("eigensolver input".into()));
    }
    let mut m = a.data().to_vec();
    // Symmetrize defensively against round-off in the caller's Gram product.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    let mut v = Matrix::identity(n).into_data();
    let norm: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sweeps = 0;
    if norm > 0.0 {
        while sweeps < JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        off += m[i * n + j] * m[i * n + j];
                    }
                }
            }
            if off.sqrt() < JACOBI_REL_TOL * norm {
                break;
            }
            sweeps += 1;
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = m[p * n + p];
                    let aqq = m[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                    let c = 1.0 / t.hypot(1.0);
                    let s = t * c;
                    for k in 0..n {
                        if k == p || k == q {
                            continue;
                        }
                        let akp = m[k * n + p];
                        let akq = m[k * n + q];
                        let np = c * akp - s * akq;
                        let nq = s * akp + c * akq;
                        m[k * n + p] = np;
                        m[p * n + k] = np;
                        m[k * n + q] = nq;
                        m[q * n + k] = nq;
                    }
                    m[p * n + p] = app - t * apq;
                    m[q * n + q] = aqq + t * apq;
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[r * n + order[c]]);
    Ok(SymmetricEigen { values, vectors, sweeps })
}

/// Leading left singular subspace.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    /// Orthonormal `rows × r` basis.
    pub u: Matrix,
    /// Nonincreasing singular values.
    pub singular_values: Vec<f64>,
}

/// Top-`r` left singular subspace of `m`.
///
/// Each returned vector is sign-normalized so that its largest-magnitude
/// entry is positive (ties go to the lowest index).
pub fn svd_top_r(m: &Matrix, r: usize) -> Result<TruncatedSvd> {
    if r == 0 || r > m.rows().min(m.cols()) {
        return Err(Error::RankOutOfRange(format!(
            "rank {r} for a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    let (mut u, singular_values) = if m.rows() <= m.cols() {
        let eig = symmetric_eigen(&m.gram_rows())?;
        let idx: Vec<usize> = (0..r).collect();
        let sv = eig.values[..r].iter().map(|v| v.max(0.0).sqrt()).collect::<Vec<_>>();
        (eig.vectors.select_columns(&idx), sv)
    } else {
        let eig = symmetric_eigen(&m.gram_cols())?;
        let sv: Vec<f64> = eig.values[..r].iter().map(|v| v.max(0.0).sqrt()).collect();
        let idx: Vec<usize> = (0..r).collect();
        let v = eig.vectors.select_columns(&idx);
        let mv = m.matmul(&v)?;
        let cutoff = sv[0] * 1e-14;
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(r);
        for (k, s) in sv.iter().enumerate() {
            if *s > cutoff && *s > 0.0 {
                cols.push(mv.column(k).iter().map(|x| x / s).collect());
            }
        }
        let u = complete_orthonormal(cols, m.rows(), r);
        (u, sv)
    };
    normalize_column_signs(&mut u);
    Ok(TruncatedSvd { u, singular_values })
}

/// Thin SVD `m = U diag(s) Vᵀ` with `k = min(rows, cols)` triplets.
pub struct ThinSvd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

pub fn thin_svd(m: &Matrix) -> Result<ThinSvd> {
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    let k = m.rows().min(m.cols());
    let idx: Vec<usize> = (0..k).collect();
    if m.rows() <= m.cols() {
        let eig = symmetric_eigen(&m.gram_rows())?;
        let s: Vec<f64> = eig.values[..k].iter().map(|v| v.max(0.0).sqrt()).collect();
        let u = eig.vectors.select_columns(&idx);
        let mtu = m.t_matmul(&u)?;
        let cols = scaled_columns(&mtu, &s);
        let v = complete_orthonormal(cols, m.cols(), k);
        Ok(ThinSvd { u, s, v })
    } else {
        let eig = symmetric_eigen(&m.gram_cols())?;
        let s: Vec<f64> = eig.values[..k].iter().map(|v| v.max(0.0).sqrt()).collect();
        let v = eig.vectors.select_columns(&idx);
        let mv = m.matmul(&v)?;
        let cols = scaled_columns(&mv, &s);
        let u = complete_orthonormal(cols, m.rows(), k);
        Ok(ThinSvd { u, s, v })
    }
}

fn scaled_columns(a: &Matrix, s: &[f64]) -> Vec<Vec<f64>> {
    let cutoff = s.first().copied().unwrap_or(0.0) * 1e-14;
    s.iter()
        .enumerate()
        .take_while(|(_, s)| **s > cutoff && **s > 0.0)
        .map(|(k, s)| a.column(k).iter().map(|x| x / s).collect())
        .collect()
}

/// Moore–Penrose pseudo-inverse with singular values at or below
/// `rel_cutoff·σ_max` treated as zero. Also returns `σ_min/σ_max`.
pub fn pseudo_inverse(m: &Matrix, rel_cutoff: f64) -> Result<(Matrix, f64)> {
    let svd = thin_svd(m)?;
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let smin = svd.s.last().copied().unwrap_or(0.0);
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    let mut out = Matrix::zeros(m.cols(), m.rows());
    for (k, s) in svd.s.iter().enumerate() {
        if smax == 0.0 || *s <= rel_cutoff * smax {
            continue;
        }
        for i in 0..m.cols() {
            let vi = svd.v.get(i, k) / s;
            for j in 0..m.rows() {
                let cur = out.get(i, j);
                out.set(i, j, cur + vi * svd.u.get(j, k));
            }
        }
    }
    Ok((out, ratio))
}

/// Orthonormal basis of the column span via modified Gram–Schmidt (two passes).
///
/// A column whose residual falls below `drop_tol` times its original norm is
/// dropped, so the result may have fewer columns than the input.
pub fn orthonormal_basis(m: &Matrix, drop_tol: f64) -> Result<Matrix> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for j in 0..m.cols() {
        let mut c = m.column(j);
        let norm0 = norm(&c);
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let p = dot(b, &c);
                for (x, y) in c.iter_mut().zip(b) {
                    *x -= p * y;
                }
            }
        }
        let n = norm(&c);
        if n > drop_tol * norm0 {
            c.iter_mut().for_each(|x| *x /= n);
            basis.push(c);
        }
    }
    if basis.is_empty() {
        return Err(Error::InvalidArgument("column span is trivial".into()));
    }
    Matrix::from_columns(&basis)
}

/// Re-orthonormalizes `cols` and pads with canonical basis vectors up to `want` columns.
fn complete_orthonormal(cols: Vec<Vec<f64>>, rows: usize, want: usize) -> Matrix {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(want);
    let push = |mut c: Vec<f64>, basis: &mut Vec<Vec<f64>>| {
        let n0 = norm(&c);
        if n0 == 0.0 {
            return;
        }
        for _ in 0..2 {
            for b in basis.iter() {
                let p = dot(b, &c);
                for (x, y) in c.iter_mut().zip(b) {
                    *x -= p * y;
                }
            }
        }
        let n = norm(&c);
        if n > 1e-8 * n0 {
            c.iter_mut().for_each(|x| *x /= n);
            basis.push(c);
        }
    };
    for c in cols {
        if basis.len() == want {
            break;
        }
        push(c, &mut basis);
    }
    let mut k = 0;
    while basis.len() < want && k < rows {
        let mut e = vec![0.0; rows];
        e[k] = 1.0;
        push(e, &mut basis);
        k += 1;
    }
    Matrix::from_columns(&basis).expect("equal lengths")
}

/// Flips each column so its largest-magnitude entry is positive.
/// Returns the applied signs.
pub fn normalize_column_signs(u: &mut Matrix) -> Vec<f64> {
    let mut signs = Vec::with_capacity(u.cols());
    for j in 0..u.cols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..u.rows() {
            let a = u.get(i, j).abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        let sign = if u.get(best, j) < 0.0 { -1.0 } else { 1.0 };
        if sign < 0.0 {
            for i in 0..u.rows() {
                let v = u.get(i, j);
                u.set(i, j, -v);
            }
        }
        signs.push(sign);
    }
    signs
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
