//! Standard errors, test statistics and confidence intervals for linear
//! forms `⟨T, I⟩` of the completed tensor.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{debias_power_iteration, residuals, TangentSpace, TangentVector};
use crate::matrix::Matrix;
use crate::normal::upper_quantile;
use crate::sampling::ObservationSet;
use crate::tensor::{one_based, DenseTensor, Shape};
use crate::tucker::TuckerFactorization;

/// Sparse indexing tensor `I`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearForm {
    shape: Shape,
    /// `(offset, weight)` sorted by offset, duplicates merged, zeros dropped.
    entries: Vec<(usize, f64)>,
    l1: f64,
    frobenius: f64,
}

impl LinearForm {
    /// From 0-based indices; repeated indices add their weights.
    pub fn new(shape: Shape, weights: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let mut raw = Vec::with_capacity(weights.len());
        for (idx, w) in weights {
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("form weight at {:?}", one_based(&idx))));
            }
            raw.push((shape.offset(&idx)?, w));
        }
        Self::from_offsets(shape, raw)
    }

    pub fn from_offsets(shape: Shape, mut raw: Vec<(usize, f64)>) -> Result<Self> {
        if let Some((o, _)) = raw.iter().find(|(o, w)| *o >= shape.numel() || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("form entry at offset {o} out of range or non-finite")));
        }
        raw.sort_by_key(|(o, _)| *o);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(raw.len());
        for (o, w) in raw {
            match entries.last_mut() {
                Some(last) if last.0 == o => last.1 += w,
                _ => entries.push((o, w)),
            }
        }
        if entries.iter().any(|(_, w)| !w.is_finite()) {
            return Err(Error::NonFinite("summed form weight".into()));
        }
        entries.retain(|(_, w)| *w != 0.0);
        if entries.is_empty() {
            return Err(Error::InvalidArgument("linear form has no nonzero weight".into()));
        }
        let l1 = entries.iter().map(|(_, w)| w.abs()).sum();
        let frobenius = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        Ok(LinearForm { shape, entries, l1, frobenius })
    }

    pub fn from_dense(t: &DenseTensor) -> Result<Self> {
        let raw = t.data().iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(o, w)| (o, *w)).collect();
        Self::from_offsets(t.shape().clone(), raw)
    }

    /// `Σ_k e_{ω_k}` with unit weights.
    pub fn indicator(shape: Shape, cells: &[Vec<usize>]) -> Result<Self> {
        Self::new(shape, cells.iter().map(|c| (c.clone(), 1.0)).collect())
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius
    }

    pub fn support(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> DenseTensor {
        let mut t = DenseTensor::zeros(self.shape.clone());
        for &(o, w) in &self.entries {
            t.data_mut()[o] = w;
        }
        t
    }

    /// `⟨T, I⟩` for a dense tensor.
    pub fn apply(&self, t: &DenseTensor) -> Result<f64> {
        self.check_shape(t.shape())?;
        Ok(self.entries.iter().map(|&(o, w)| w * t.data()[o]).sum())
    }

    /// `⟨T, I⟩` for a Tucker tensor, entry by entry.
    pub fn apply_tucker(&self, f: &TuckerFactorization) -> Result<f64> {
        self.check_shape(&f.shape())?;
        let mut idx = vec![0usize; self.shape.order()];
        Ok(self.entries.iter().map(|&(o, w)| w * f.entry_at_offset(&self.shape, o, &mut idx)).sum())
    }

    fn check_shape(&self, other: &Shape) -> Result<()> {
        if &self.shape != other {
            return Err(Error::ShapeMismatch { left: self.shape.dims().to_vec(), right: other.dims().to_vec() });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceMode {
    #[serde(rename = "homo")]
    Homoskedastic,
    #[serde(rename = "hetero")]
    Heteroskedastic,
}

impl FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homo" | "homoskedastic" => Ok(VarianceMode::Homoskedastic),
            "hetero" | "heteroskedastic" => Ok(VarianceMode::Heteroskedastic),
            _ => Err(Error::Parse(format!("unknown variance mode {s:?}"))),
        }
    }
}

impl fmt::Display for VarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceMode::Homoskedastic => "homo",
            VarianceMode::Heteroskedastic => "hetero",
        })
    }
}

/// Where the tangent projection of the form is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TangentAt {
    #[default]
    Init,
    /// Debug comparison: the post-power-iteration estimate.
    Final,
}

impl FromStr for TangentAt {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "init" => Ok(TangentAt::Init),
            "final" => Ok(TangentAt::Final),
            _ => Err(Error::Parse(format!("unknown tangent point {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_hat: Option<f64>,
    /// `‖P_T̂(I)‖_F`.
    pub proj_norm: f64,
    /// `α̂_I = ‖P_T̂(I)‖_F √(d*/d̄) / ‖I‖_F`.
    pub alignment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub point: f64,
    pub se: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    pub ci: [f64; 2],
    pub alpha: f64,
    pub variance_mode: VarianceMode,
    pub diagnostics: InferenceDiagnostics,
    /// `se = 0`: the interval has zero width and no statistic is formed.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointInferenceResult {
    pub results: Vec<InferenceResult>,
    pub correlation: Matrix,
}

/// `σ̂² = (1/n) Σ (Y_i − ⟨T_init, X_i⟩)²`.
pub fn sigma_hat_sq(obs: &ObservationSet, init: &TuckerFactorization) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let res = residuals(obs, init)?;
    Ok(res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64)
}

fn check_form(space: &TangentSpace, form: &LinearForm) -> Result<()> {
    if form.shape() != space.shape() {
        return Err(Error::ShapeMismatch { left: form.shape().dims().to_vec(), right: space.shape().dims().to_vec() });
    }
    Ok(())
}

fn project_form(space: &TangentSpace, form: &LinearForm) -> Result<TangentVector> {
    check_form(space, form)?;
    space.project_sparse(form.entries())
}

/// `σ̂ ‖P_T̂(I)‖_F √(d*/n)` with the tangent space at `init`.
pub fn plugin_se_homo(init: &TuckerFactorization, form: &LinearForm, n: usize, sigma_hat: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyObservations);
    }
    if !(sigma_hat >= 0.0 && sigma_hat.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma_hat must be >= 0, got {sigma_hat}")));
    }
    let space = TangentSpace::new(init)?;
    let p = space.norm(&project_form(&space, form)?)?;
    Ok(sigma_hat * p * (form.shape().numel() as f64 / n as f64).sqrt())
}

fn s_hat_sq_with(space: &TangentSpace, obs: &ObservationSet, res: &[f64], proj: &TangentVector) -> f64 {
    let shape = obs.shape();
    let mut idx = vec![0usize; shape.order()];
    let sum: f64 = obs
        .samples()
        .iter()
        .zip(res)
        .map(|(o, r)| {
            shape.unravel_into(o.offset, &mut idx);
            let v = r * space.entry(proj, &idx);
            v * v
        })
        .sum();
    obs.inverse_rate() * sum
}

/// `ŝ²(I) = (d*/n) Σ [(Y_i − ⟨T_init, X_i⟩) ⟨P_T̂(I), X_i⟩]²`.
pub fn s_hat_sq_hetero(obs: &ObservationSet, init: &TuckerFactorization, form: &LinearForm) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let space = TangentSpace::new(init)?;
    let proj = project_form(&space, form)?;
    let res = residuals(obs, init)?;
    Ok(s_hat_sq_with(&space, obs, &res, &proj))
}

/// `(⟨T̂, I⟩ − truth_value) / se`.
pub fn test_statistic(estimate: &TuckerFactorization, truth_value: f64, form: &LinearForm, se: f64) -> Result<f64> {
    if !(se > 0.0 && se.is_finite()) {
        return Err(Error::InvalidArgument(format!("standard error must be positive, got {se}")));
    }
    Ok((form.apply_tucker(estimate)? - truth_value) / se)
}

/// Two-sided `1 − alpha` interval `point ∓ z_{α/2}·se`.
pub fn confidence_interval(point: f64, se: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if !(se >= 0.0) {
        return Err(Error::InvalidArgument(format!("standard error must be >= 0, got {se}")));
    }
    let h = upper_quantile(alpha / 2.0) * se;
    Ok((point - h, point + h))
}

fn correlation_from(space: &TangentSpace, projs: &[TangentVector]) -> Result<Matrix> {
    let norms = projs.iter().map(|p| space.norm(p)).collect::<Result<Vec<_>>>()?;
    if let Some(k) = norms.iter().position(|n| *n == 0.0) {
        return Err(Error::DegenerateForm { form: k + 1, reason: "tangent projection is zero".into() });
    }
    let k = projs.len();
    let mut rho = Matrix::identity(k);
    for a in 0..k {
        for b in a + 1..k {
            let v = if projs[a] == projs[b] {
                1.0
            } else {
                (space.inner(&projs[a], &projs[b])? / (norms[a] * norms[b])).clamp(-1.0, 1.0)
            };
            rho.set(a, b, v);
            rho.set(b, a, v);
        }
    }
    Ok(rho)
}

/// `ρ(I_a, I_b) = ⟨P(I_a), P(I_b)⟩ / (‖P(I_a)‖_F ‖P(I_b)‖_F)` at `init`.
pub fn joint_correlation(init: &TuckerFactorization, forms: &[LinearForm]) -> Result<Matrix> {
    if forms.len() < 2 {
        return Err(Error::InvalidArgument("joint correlation needs at least two forms".into()));
    }
    let space = TangentSpace::new(init)?;
    let projs = forms.iter().map(|f| project_form(&space, f)).collect::<Result<Vec<_>>>()?;
    correlation_from(&space, &projs)
}

/// Upper bound on `|ρ(I₁, I₂)|` from incoherence, sparsity and alignment:
///
/// `(2μ^m r* ‖I₁‖₁‖I₂‖₁ + d* Σ_j |⟨I₁, I₂ ×_{k≠j} P_{U_k}⟩|) / (d̄ α² ‖I₁‖_F‖I₂‖_F)`
///
/// with `μ` the largest factor incoherence and `α` the smaller alignment.
pub fn correlation_bound(init: &TuckerFactorization, first: &LinearForm, second: &LinearForm) -> Result<f64> {
    let space = TangentSpace::new(init)?;
    let diag = init.diagnostics()?;
    let shape = space.shape().clone();
    let dstar = shape.numel() as f64;
    let dbar = shape.max_dim() as f64;
    let mut alpha = f64::INFINITY;
    for (k, f) in [first, second].into_iter().enumerate() {
        let p = space.norm(&project_form(&space, f)?)?;
        let a = p * (dstar / dbar).sqrt() / f.frobenius_norm();
        if a == 0.0 {
            return Err(Error::DegenerateForm { form: k + 1, reason: "alignment is zero".into() });
        }
        alpha = alpha.min(a);
    }
    let m = shape.order() as i32;
    let rstar = init.rank().product() as f64;
    let denom = dbar * alpha * alpha * first.frobenius_norm() * second.frobenius_norm();
    let term1 = 2.0 * diag.mu().powi(m) * rstar * first.l1_norm() * second.l1_norm() / denom;
    let (_, a1) = space.compress_sparse(first.entries())?;
    let (_, a2) = space.compress_sparse(second.entries())?;
    let cross: f64 = a1
        .iter()
        .zip(&a2)
        .map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| p * q).sum::<f64>().abs())
        .sum();
    Ok(term1 + dstar * cross / denom)
}

/// One debias + power-iteration pass shared by any number of forms.
/// Relative residual level treated as an exact fit.
pub const EXACT_FIT_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct InferenceSession<'a> {
    obs: &'a ObservationSet,
    estimate: TuckerFactorization,
    space: TangentSpace,
    residuals: Vec<f64>,
    sigma_hat: f64,
    /// Residual scale below which the fit is exact up to rounding.
    exact_floor: f64,
}

impl<'a> InferenceSession<'a> {
    pub fn new(obs: &'a ObservationSet, init: &TuckerFactorization, tangent_at: TangentAt) -> Result<Self> {
        let estimate = debias_power_iteration(obs, init)?;
        let space = match tangent_at {
            TangentAt::Init => TangentSpace::new(init)?,
            TangentAt::Final => TangentSpace::new(&estimate)?,
        };
        let residuals = residuals(obs, init)?;
        let sigma_hat = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
        let y_rms = (obs.samples().iter().map(|o| o.y * o.y).sum::<f64>() / obs.len() as f64).sqrt();
        let exact_floor = EXACT_FIT_TOL * y_rms;
        Ok(InferenceSession { obs, estimate, space, residuals, sigma_hat, exact_floor })
    }

    pub fn estimate(&self) -> &TuckerFactorization {
        &self.estimate
    }

    pub fn sigma_hat(&self) -> f64 {
        self.sigma_hat
    }

    pub fn infer(
        &self,
        form: &LinearForm,
        alpha: f64,
        mode: VarianceMode,
        truth_value: Option<f64>,
    ) -> Result<InferenceResult> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        let proj = project_form(&self.space, form)?;
        let proj_norm = self.space.norm(&proj)?;
        let shape = self.space.shape();
        let rate = self.obs.inverse_rate();
        let alignment = proj_norm * (shape.numel() as f64 / shape.max_dim() as f64).sqrt() / form.frobenius_norm();
        let (se, diagnostics) = match mode {
            VarianceMode::Homoskedastic => (
                self.sigma_hat * proj_norm * rate.sqrt(),
                InferenceDiagnostics { sigma_hat: Some(self.sigma_hat), s_hat: None, proj_norm, alignment },
            ),
            VarianceMode::Heteroskedastic => {
                let s_hat = s_hat_sq_with(&self.space, self.obs, &self.residuals, &proj).sqrt();
                (s_hat * rate.sqrt(), InferenceDiagnostics { sigma_hat: None, s_hat: Some(s_hat), proj_norm, alignment })
            }
        };
        let point = form.apply_tucker(&self.estimate)?;
        let floor = self.exact_floor * proj_norm * rate.sqrt();
        let degenerate = se <= floor;
        let se = if degenerate { 0.0 } else { se };
        let (lo, hi) = confidence_interval(point, se, alpha)?;
        let statistic = match truth_value {
            Some(t) if !degenerate => Some((point - t) / se),
            _ => None,
        };
        Ok(InferenceResult { point, se, statistic, ci: [lo, hi], alpha, variance_mode: mode, diagnostics, degenerate })
    }

    /// Per-form results (computed in parallel, returned in input order).
    pub fn infer_many(
        &self,
        forms: &[LinearForm],
        alpha: f64,
        mode: VarianceMode,
        truth_values: Option<&[f64]>,
    ) -> Result<Vec<InferenceResult>> {
        if let Some(t) = truth_values {
            if t.len() != forms.len() {
                return Err(Error::DimensionMismatch(format!("{} truth values for {} forms", t.len(), forms.len())));
            }
        }
        forms
            .par_iter()
            .enumerate()
            .map(|(k, f)| self.infer(f, alpha, mode, truth_values.map(|t| t[k])))
            .collect()
    }

    pub fn infer_joint(&self, forms: &[LinearForm], alpha: f64, mode: VarianceMode) -> Result<JointInferenceResult> {
        if forms.len() < 2 {
            return Err(Error::InvalidArgument("joint inference needs at least two forms".into()));
        }
        let results = self.infer_many(forms, alpha, mode, None)?;
        let projs = forms.iter().map(|f| project_form(&self.space, f)).collect::<Result<Vec<_>>>()?;
        let correlation = correlation_from(&self.space, &projs)?;
        Ok(JointInferenceResult { results, correlation })
    }
}

/// Debias, power-iterate, and build the interval for one form.
pub fn infer(
    obs: &ObservationSet,
    init: &TuckerFactorization,
    form: &LinearForm,
    alpha: f64,
    mode: VarianceMode,
) -> Result<InferenceResult> {
    InferenceSession::new(obs, init, TangentAt::Init)?.infer(form, alpha, mode, None)
}
