use rand::Rng;
use rand_distr::StandardNormal;

use super::tangent::sign_normalized;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::matrix::Matrix;
use crate::rng::{stream, Purpose};
use crate::sampling::ObservationSet;
use crate::tensor::DenseTensor;
use crate::tucker::{hosvd, MultilinearRank, TuckerFactorization};

/// `Σ Y_i X_i`: each sample added into its cell, duplicates summed.
pub fn observation_tensor(obs: &ObservationSet) -> DenseTensor {
    let mut t = DenseTensor::zeros(obs.shape().clone());
    let data = t.data_mut();
    for o in obs.samples() {
        data[o.offset] += o.y;
    }
    t
}

/// Spectral initialization with the Gram-matrix diagonal deleted.
///
/// Per mode, the top-r_j eigenvectors of `M_j(T_obv)M_j(T_obv)ᵀ` with zeroed
/// diagonal give `Û_j`; the estimate is `(d*/n)·T_obv ×_j Û_jᵀ` rebalanced by
/// an HOSVD of the core.
pub fn diag_deletion_init(obs: &ObservationSet, rank: &MultilinearRank) -> Result<TuckerFactorization> {
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    rank.validate_for(obs.shape())?;
    let tobv = observation_tensor(obs);
    let mut factors = Vec::with_capacity(rank.ranks().len());
    for j in 0..obs.shape().order() {
        let mut g = tobv.unfold(j)?.gram_rows();
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("mode-{} Gram matrix", j + 1)));
        }
        for i in 0..g.rows() {
            g.set(i, i, 0.0);
        }
        let eig = symmetric_eigen(&g)?;
        let idx: Vec<usize> = (0..rank.get(j)).collect();
        factors.push(sign_normalized(eig.vectors.select_columns(&idx)));
    }
    let ut: Vec<Matrix> = factors.iter().map(Matrix::transpose).collect();
    let mats: Vec<Option<&Matrix>> = ut.iter().map(Some).collect();
    let core = tobv.multi_mode_product(&mats)?.scale(obs.inverse_rate());
    let inner = hosvd(&core, rank)?;
    let (core, v) = inner.into_parts();
    let factors = factors.iter().zip(&v).map(|(u, v)| u.matmul(v)).collect::<Result<Vec<_>>>()?;
    let mut f = TuckerFactorization::new(core, factors)?;
    f.normalize_signs();
    Ok(f)
}

/// `HOSVD_r(truth + E)` with an independent Gaussian `E` scaled so `‖E‖_∞ = target_linf`.
pub fn make_independent_init_with<R: Rng + ?Sized>(
    truth: &TuckerFactorization,
    target_linf: f64,
    rng: &mut R,
) -> Result<TuckerFactorization> {
    if !(target_linf.is_finite() && target_linf >= 0.0) {
        return Err(Error::InvalidArgument(format!("target l-infinity norm must be >= 0, got {target_linf}")));
    }
    let t = truth.reconstruct();
    if target_linf == 0.0 {
        return Ok(truth.clone());
    }
    let e = DenseTensor::from_fn(t.shape().clone(), |_| rng.sample(StandardNormal));
    let linf = e.norms().linf;
    let mut noisy = t;
    noisy.axpy(target_linf / linf, &e)?;
    hosvd(&noisy, &truth.rank())
}

pub fn make_independent_init(truth: &TuckerFactorization, target_linf: f64, seed: u64) -> Result<TuckerFactorization> {
    make_independent_init_with(truth, target_linf, &mut stream(seed, 0, Purpose::Init))
}
