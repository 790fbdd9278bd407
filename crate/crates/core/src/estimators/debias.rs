use crate::error::{Error, Result};
use crate::linalg::svd_top_r;
use crate::matrix::Matrix;
use crate::sampling::ObservationSet;
use crate::tensor::DenseTensor;
use crate::tucker::TuckerFactorization;

/// Residuals `Y_i − ⟨T_init, X_i⟩` in observation order.
pub fn residuals(obs: &ObservationSet, init: &TuckerFactorization) -> Result<Vec<f64>> {
    check_shapes(obs, init)?;
    let shape = obs.shape();
    let mut idx = vec![0usize; shape.order()];
    Ok(obs.samples().iter().map(|o| o.y - init.entry_at_offset(shape, o.offset, &mut idx)).collect())
}

/// `T_ubs = T_init + (d*/n) Σ (Y_i − ⟨T_init, X_i⟩) X_i`, accumulated in sample order.
pub fn debiased_tensor(obs: &ObservationSet, init: &TuckerFactorization) -> Result<DenseTensor> {
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let res = residuals(obs, init)?;
    let scale = obs.inverse_rate();
    let mut t = init.reconstruct();
    let data = t.data_mut();
    for (o, r) in obs.samples().iter().zip(&res) {
        data[o.offset] += scale * r;
    }
    Ok(t)
}

/// One power iteration from the initial factors:
/// `Û_{j,1} = SVD_{r_j}(M_j(T_ubs ×_{k≠j} Û_{k,0}ᵀ))`, core `T_ubs ×_j Û_{j,1}ᵀ`.
pub fn power_iteration(t_ubs: &DenseTensor, init: &TuckerFactorization) -> Result<TuckerFactorization> {
    if t_ubs.shape() != &init.shape() {
        return Err(Error::ShapeMismatch { left: t_ubs.shape().dims().to_vec(), right: init.shape().dims().to_vec() });
    }
    let m = init.order();
    let ut: Vec<Matrix> = init.factors().iter().map(Matrix::transpose).collect();
    let mut factors = Vec::with_capacity(m);
    for j in 0..m {
        let mats: Vec<Option<&Matrix>> = (0..m).map(|k| if k == j { None } else { Some(&ut[k]) }).collect();
        let compressed = t_ubs.multi_mode_product(&mats)?.unfold(j)?;
        factors.push(svd_top_r(&compressed, init.rank().get(j))?.u);
    }
    let new_t: Vec<Matrix> = factors.iter().map(Matrix::transpose).collect();
    let mats: Vec<Option<&Matrix>> = new_t.iter().map(Some).collect();
    let core = t_ubs.multi_mode_product(&mats)?;
    TuckerFactorization::new(core, factors)
}

/// Debiasing pass followed by one power iteration.
pub fn debias_power_iteration(obs: &ObservationSet, init: &TuckerFactorization) -> Result<TuckerFactorization> {
    power_iteration(&debiased_tensor(obs, init)?, init)
}

fn check_shapes(obs: &ObservationSet, init: &TuckerFactorization) -> Result<()> {
    if obs.shape() != &init.shape() {
        return Err(Error::ShapeMismatch { left: obs.shape().dims().to_vec(), right: init.shape().dims().to_vec() });
    }
    Ok(())
}
