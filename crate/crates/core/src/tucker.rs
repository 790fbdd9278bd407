//! Tucker factorizations `T = C ×₁ U₁ ×₂ ⋯ ×_m U_m` and HOSVD.

use crate::error::{Error, Result};
use crate::linalg::{normalize_column_signs, svd_top_r};
use crate::matrix::Matrix;
use crate::tensor::{contract_vectors, DenseTensor, Shape};

/// Orthonormality tolerance enforced on factor matrices.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultilinearRank(Vec<usize>);

impl MultilinearRank {
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        if ranks.is_empty() || ranks.contains(&0) {
            return Err(Error::RankOutOfRange(format!("ranks must be positive, got {ranks:?}")));
        }
        Ok(MultilinearRank(ranks))
    }

    pub fn uniform(order: usize, r: usize) -> Result<Self> {
        Self::new(vec![r; order])
    }

    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    pub fn get(&self, mode: usize) -> usize {
        self.0[mode]
    }

    /// r* = Π r_j.
    pub fn product(&self) -> usize {
        self.0.iter().product()
    }

    /// Checks `1 ≤ r_j ≤ d_j` for every mode.
    pub fn validate_for(&self, shape: &Shape) -> Result<()> {
        if self.0.len() != shape.order() {
            return Err(Error::RankOutOfRange(format!(
                "{} ranks for an order-{} tensor",
                self.0.len(),
                shape.order()
            )));
        }
        for (j, (&r, &d)) in self.0.iter().zip(shape.dims()).enumerate() {
            if r > d {
                return Err(Error::RankOutOfRange(format!("rank {r} exceeds dimension {d} in mode {}", j + 1)));
            }
        }
        Ok(())
    }

    pub fn core_shape(&self) -> Result<Shape> {
        Shape::new(self.0.clone())
    }
}

/// Core tensor plus orthonormal factors.
#[derive(Clone, Debug, PartialEq)]
pub struct TuckerFactorization {
    core: DenseTensor,
    factors: Vec<Matrix>,
}

impl TuckerFactorization {
    /// Validates factor sizes against the core and `UᵀU = I` to 1e-10.
    pub fn new(core: DenseTensor, factors: Vec<Matrix>) -> Result<Self> {
        let f = Self::from_parts_unchecked(core, factors)?;
        for (j, u) in f.factors.iter().enumerate() {
            let dev = u.orthonormality_defect();
            if dev > ORTHONORMAL_TOL {
                return Err(Error::NotOrthonormal { mode: j + 1, deviation: dev });
            }
        }
        Ok(f)
    }

    /// Size checks only; for factors that are orthonormal by construction.
    pub(crate) fn from_parts_unchecked(core: DenseTensor, factors: Vec<Matrix>) -> Result<Self> {
        if factors.len() != core.shape().order() {
            return Err(Error::DimensionMismatch(format!(
                "{} factors for an order-{} core",
                factors.len(),
                core.shape().order()
            )));
        }
        for (j, u) in factors.iter().enumerate() {
            if u.cols() != core.shape().dim(j) {
                return Err(Error::DimensionMismatch(format!(
                    "factor {} has {} columns but core mode has size {}",
                    j + 1,
                    u.cols(),
                    core.shape().dim(j)
                )));
            }
            if u.rows() < u.cols() {
                return Err(Error::RankOutOfRange(format!(
                    "factor {} is {}x{}: rank exceeds dimension",
                    j + 1,
                    u.rows(),
                    u.cols()
                )));
            }
            if !u.is_finite() {
                return Err(Error::NonFinite(format!("factor {}", j + 1)));
            }
        }
        Shape::new(factors.iter().map(Matrix::rows).collect())?;
        Ok(TuckerFactorization { core, factors })
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn factor(&self, mode: usize) -> &Matrix {
        &self.factors[mode]
    }

    pub fn into_parts(self) -> (DenseTensor, Vec<Matrix>) {
        (self.core, self.factors)
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    /// Ambient shape `d₁ × ⋯ × d_m`.
    pub fn shape(&self) -> Shape {
        Shape::new(self.factors.iter().map(Matrix::rows).collect()).expect("validated on construction")
    }

    pub fn rank(&self) -> MultilinearRank {
        MultilinearRank(self.core.shape().dims().to_vec())
    }

    /// Dense `C ×₁ U₁ ⋯ ×_m U_m`.
    pub fn reconstruct(&self) -> DenseTensor {
        let mats: Vec<Option<&Matrix>> = self.factors.iter().map(Some).collect();
        self.core.multi_mode_product(&mats).expect("sizes validated on construction")
    }

    /// Single entry `[T]_ω` without forming the dense tensor.
    pub fn entry(&self, index: &[usize]) -> f64 {
        let rows: Vec<&[f64]> = self.factors.iter().zip(index).map(|(u, &i)| u.row(i)).collect();
        contract_vectors(&self.core, &rows)
    }

    /// Entry at a linear offset of the ambient shape.
    pub fn entry_at_offset(&self, shape: &Shape, offset: usize, scratch: &mut [usize]) -> f64 {
        shape.unravel_into(offset, scratch);
        self.entry(scratch)
    }

    /// Applies an orthogonal change of basis per mode: `U_j ← U_j Q_j`, `C ← C ×_j Q_jᵀ`.
    /// The represented tensor is unchanged.
    pub fn rotate(&self, rotations: &[Matrix]) -> Result<TuckerFactorization> {
        if rotations.len() != self.order() {
            return Err(Error::DimensionMismatch("one rotation per mode required".into()));
        }
        let mut core = self.core.clone();
        let mut factors = Vec::with_capacity(self.order());
        for (j, q) in rotations.iter().enumerate() {
            core = core.mode_product(j, &q.transpose())?;
            factors.push(self.factors[j].matmul(q)?);
        }
        TuckerFactorization::from_parts_unchecked(core, factors)
    }

    /// Flips factor columns so each has a positive largest-magnitude entry,
    /// compensating in the core.
    pub fn normalize_signs(&mut self) {
        for j in 0..self.order() {
            let signs = normalize_column_signs(&mut self.factors[j]);
            if signs.iter().any(|s| *s < 0.0) {
                let d = Matrix::from_fn(signs.len(), signs.len(), |a, b| if a == b { signs[a] } else { 0.0 });
                self.core = self.core.mode_product(j, &d).expect("square sign matrix");
            }
        }
    }

    /// Diagnostics of the represented tensor; see [`TuckerDiagnostics`].
    pub fn diagnostics(&self) -> Result<TuckerDiagnostics> {
        let shape = self.shape();
        let rank = self.rank();
        let mut incoherence = Vec::with_capacity(self.order());
        for (j, u) in self.factors.iter().enumerate() {
            let t = u.two_inf_norm();
            incoherence.push(shape.dim(j) as f64 * t * t / rank.get(j) as f64);
        }
        // Factors are orthonormal, so the unfoldings of the reconstruction
        // share nonzero singular values with the core unfoldings.
        let mut lambda_min = f64::INFINITY;
        let mut lambda_max: f64 = 0.0;
        for j in 0..self.order() {
            let cj = self.core.unfold(j)?;
            let svd = svd_top_r(&cj, rank.get(j))?;
            lambda_max = lambda_max.max(svd.singular_values[0]);
            lambda_min = lambda_min.min(*svd.singular_values.last().expect("rank >= 1"));
        }
        if lambda_max == 0.0 {
            return Err(Error::ZeroCore);
        }
        let dof = degrees_of_freedom(&shape, &rank);
        Ok(TuckerDiagnostics {
            incoherence,
            lambda_min,
            lambda_max,
            kappa: lambda_max / lambda_min,
            dof,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuckerDiagnostics {
    /// `Inco(U_j) = d_j ‖U_j‖²_{2,∞} / r_j` per mode.
    pub incoherence: Vec<f64>,
    /// Smallest r_j-th singular value over the mode unfoldings.
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub dof: usize,
}

impl TuckerDiagnostics {
    /// μ = max_j Inco(U_j).
    pub fn mu(&self) -> f64 {
        self.incoherence.iter().copied().fold(0.0, f64::max)
    }
}

/// Dimension of the fixed-rank manifold: `r* + Σ_j r_j(d_j − r_j)`.
pub fn degrees_of_freedom(shape: &Shape, rank: &MultilinearRank) -> usize {
    rank.product()
        + shape
            .dims()
            .iter()
            .zip(rank.ranks())
            .map(|(d, r)| r * (d - r))
            .sum::<usize>()
}

/// Higher-order SVD truncated to `rank`.
pub fn hosvd(t: &DenseTensor, rank: &MultilinearRank) -> Result<TuckerFactorization> {
    rank.validate_for(t.shape())?;
    let mut factors = Vec::with_capacity(rank.ranks().len());
    for j in 0..t.shape().order() {
        let svd = svd_top_r(&t.unfold(j)?, rank.get(j))?;
        factors.push(svd.u);
    }
    let mut core = t.clone();
    for (j, u) in factors.iter().enumerate() {
        core = core.mode_product(j, &u.transpose())?;
    }
    TuckerFactorization::from_parts_unchecked(core, factors)
}

/// `t ×₁ U₁U₁ᵀ ⋯ ×_m U_mU_mᵀ`.
pub fn project_multilinear(t: &DenseTensor, factors: &[Matrix]) -> Result<DenseTensor> {
    if factors.len() != t.shape().order() {
        return Err(Error::DimensionMismatch(format!(
            "{} factors for an order-{} tensor",
            factors.len(),
            t.shape().order()
        )));
    }
    let mut out = t.clone();
    for (j, u) in factors.iter().enumerate() {
        if u.rows() != t.shape().dim(j) {
            return Err(Error::DimensionMismatch(format!(
                "factor {} has {} rows, tensor mode has size {}",
                j + 1,
                u.rows(),
                t.shape().dim(j)
            )));
        }
        out = out.mode_product(j, &u.transpose())?.mode_product(j, u)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e_cols(d: usize, r: usize) -> Matrix {
        Matrix::from_fn(d, r, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn reconstruct_rank_one() {
        let u = Matrix::new(2, 1, vec![0.6, 0.8]).unwrap();
        let v = Matrix::new(3, 1, vec![0.0, 1.0, 0.0]).unwrap();
        let w = Matrix::new(2, 1, vec![-0.8, 0.6]).unwrap();
        let core = DenseTensor::new(Shape::new(vec![1, 1, 1]).unwrap(), vec![2.5]).unwrap();
        let f = TuckerFactorization::new(core, vec![u.clone(), v.clone(), w.clone()]).unwrap();
        let expected = DenseTensor::outer(&[u.column(0), v.column(0), w.column(0)]).unwrap().scale(2.5);
        let got = f.reconstruct();
        for (a, b) in got.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((f.entry(&[1, 1, 0]) - 2.5 * 0.8 * -0.8).abs() < 1e-15);
    }

    #[test]
    fn reconstruct_with_identity_factors_pads_core() {
        let core = DenseTensor::from_fn(Shape::new(vec![2, 2, 2]).unwrap(), |i| (i[0] + 2 * i[1] + 4 * i[2]) as f64);
        let f = TuckerFactorization::new(core.clone(), vec![e_cols(3, 2), e_cols(2, 2), e_cols(4, 2)]).unwrap();
        let t = f.reconstruct();
        assert_eq!(t.shape().dims(), &[3, 2, 4]);
        for a in 0..3 {
            for b in 0..2 {
                for c in 0..4 {
                    let expected = if a < 2 && c < 2 { core.get(&[a, b, c]).unwrap() } else { 0.0 };
                    assert_eq!(t.get(&[a, b, c]).unwrap(), expected);
                }
            }
        }
    }

    #[test]
    fn rejects_non_orthonormal_factor() {
        let core = DenseTensor::filled(Shape::new(vec![1, 1]).unwrap(), 1.0);
        let bad = Matrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            TuckerFactorization::new(core, vec![bad.clone(), bad]),
            Err(Error::NotOrthonormal { mode: 1, .. })
        ));
    }

    #[test]
    fn incoherence_of_canonical_and_flat_factors() {
        let d = 6;
        let core = DenseTensor::from_fn(Shape::new(vec![2, 2, 2]).unwrap(), |i| if i[0] == i[1] && i[1] == i[2] { 1.0 + i[0] as f64 } else { 0.0 });
        let f = TuckerFactorization::new(core, vec![e_cols(d, 2), e_cols(d, 2), e_cols(d, 2)]).unwrap();
        let diag = f.diagnostics().unwrap();
        for inco in &diag.incoherence {
            assert!((inco - d as f64 / 2.0).abs() < 1e-14);
        }
        assert!((diag.lambda_min - 1.0).abs() < 1e-12);
        assert!((diag.lambda_max - 2.0).abs() < 1e-12);
        assert!((diag.kappa - 2.0).abs() < 1e-12);

        let flat = Matrix::from_fn(d, 1, |_, _| 1.0 / (d as f64).sqrt());
        let core1 = DenseTensor::filled(Shape::new(vec![1, 1, 1]).unwrap(), 3.0);
        let g = TuckerFactorization::new(core1, vec![flat.clone(), flat.clone(), flat]).unwrap();
        for inco in g.diagnostics().unwrap().incoherence {
            assert!((inco - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_core_has_no_condition_number() {
        let core = DenseTensor::zeros(Shape::new(vec![1, 1, 1]).unwrap());
        let f = TuckerFactorization::new(core, vec![e_cols(3, 1), e_cols(3, 1), e_cols(3, 1)]).unwrap();
        assert_eq!(f.diagnostics(), Err(Error::ZeroCore));
    }

    #[test]
    fn dof_formula() {
        let shape = Shape::new(vec![100, 100, 100]).unwrap();
        let rank = MultilinearRank::uniform(3, 2).unwrap();
        // core entries + Stiefel(d, r) per factor - O(r) rotation gauge per mode
        let (d, r) = (100, 2);
        let by_count = r * r * r + 3 * ((d * r - r * (r + 1) / 2) - r * (r - 1) / 2);
        assert_eq!(degrees_of_freedom(&shape, &rank), 596);
        assert_eq!(by_count, 596);
    }

    #[test]
    fn hosvd_full_rank_is_exact() {
        let t = DenseTensor::from_fn(Shape::new(vec![3, 4, 2]).unwrap(), |i| ((i[0] * 8 + i[1] * 2 + i[2]) as f64).sin());
        let f = hosvd(&t, &MultilinearRank::new(vec![3, 4, 2]).unwrap()).unwrap();
        let back = f.reconstruct();
        let err = back.sub(&t).unwrap().frobenius_norm() / t.frobenius_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn project_multilinear_edge_cases() {
        let t = DenseTensor::from_fn(Shape::new(vec![3, 3, 3]).unwrap(), |i| (i[0] + i[1] * i[2]) as f64);
        let full = vec![Matrix::identity(3), Matrix::identity(3), Matrix::identity(3)];
        assert_eq!(project_multilinear(&t, &full).unwrap(), t);

        let e1 = e_cols(3, 1);
        let e2 = Matrix::new(3, 1, vec![0.0, 1.0, 0.0]).unwrap();
        let x = DenseTensor::one_hot(Shape::new(vec![3, 3, 3]).unwrap(), &[1, 1, 1]).unwrap();
        let p = project_multilinear(&x, &[e1.clone(), e2.clone(), e2]).unwrap();
        assert_eq!(p.frobenius_norm(), 0.0);
    }

    #[test]
    fn rank_validation() {
        let shape = Shape::new(vec![3, 3]).unwrap();
        assert!(MultilinearRank::new(vec![4, 1]).unwrap().validate_for(&shape).is_err());
        assert!(MultilinearRank::new(vec![0, 1]).is_err());
        assert!(MultilinearRank::new(vec![1, 1, 1]).unwrap().validate_for(&shape).is_err());
    }
}
