use super::init::observation_tensor;
use super::tangent::TangentSpace;
use crate::error::{Error, Result};
use crate::sampling::ObservationSet;
use crate::tensor::DenseTensor;
use crate::tucker::{MultilinearRank, TuckerDiagnostics, TuckerFactorization};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    /// `d*/n` offline; `c₀·d*·log d̄ / n` online.
    Default,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub rank: MultilinearRank,
    pub rgd_steps: usize,
    pub step_size: StepSize,
    /// Early stop when `‖T_t − T_{t−1}‖_F / ‖T_{t−1}‖_F` drops below this.
    pub tolerance: f64,
    /// Online step constant `c₀`.
    pub online_c0: f64,
    /// Offline only: halve the step (restarting from the configured size at
    /// every iteration) until the empirical loss does not increase.
    pub backtracking: bool,
}

impl EstimatorConfig {
    pub fn new(rank: MultilinearRank) -> Self {
        EstimatorConfig { rank, rgd_steps: 50, step_size: StepSize::Default, tolerance: 1e-10, online_c0: 1.0, backtracking: true }
    }

    fn validate(&self, init: &TuckerFactorization) -> Result<()> {
        if init.rank() != self.rank {
            return Err(Error::RankOutOfRange(format!(
                "initial rank {:?} differs from configured rank {:?}",
                init.rank().ranks(),
                self.rank.ranks()
            )));
        }
        if let StepSize::Fixed(s) = self.step_size {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidArgument(format!("step size must be >= 0, got {s}")));
            }
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CompletionResult {
    pub estimate: TuckerFactorization,
    /// Relative F-error against the supplied truth: entry 0 is the start
    /// point, entry t the iterate after step t. Online runs record only the
    /// start and the end of the pass.
    pub trajectory: Option<Vec<f64>>,
    pub steps_taken: usize,
    pub diagnostics: Option<TuckerDiagnostics>,
}

impl CompletionResult {
    fn finish(estimate: TuckerFactorization, trajectory: Option<Vec<f64>>, steps_taken: usize) -> Self {
        let diagnostics = estimate.diagnostics().ok();
        CompletionResult { estimate, trajectory, steps_taken, diagnostics }
    }
}

const MAX_HALVINGS: usize = 30;

fn rel_error(est: &DenseTensor, truth: &DenseTensor) -> Result<f64> {
    Ok(est.sub(truth)?.frobenius_norm() / truth.frobenius_norm())
}

fn check(obs: &ObservationSet, init: &TuckerFactorization, truth: Option<&DenseTensor>) -> Result<()> {
    if obs.shape() != &init.shape() {
        return Err(Error::ShapeMismatch { left: obs.shape().dims().to_vec(), right: init.shape().dims().to_vec() });
    }
    if let Some(t) = truth {
        if t.shape() != obs.shape() {
            return Err(Error::ShapeMismatch { left: t.shape().dims().to_vec(), right: obs.shape().dims().to_vec() });
        }
    }
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    Ok(())
}

/// Offline Riemannian gradient descent on `½Σ(⟨T, X_i⟩ − Y_i)²`.
pub fn rgd_offline(
    obs: &ObservationSet,
    init: &TuckerFactorization,
    cfg: &EstimatorConfig,
    truth: Option<&DenseTensor>,
) -> Result<CompletionResult> {
    check(obs, init, truth)?;
    cfg.validate(init)?;
    let step = match cfg.step_size {
        StepSize::Default => obs.inverse_rate(),
        StepSize::Fixed(s) => s,
    };
    let guard = 1e3 * observation_tensor(obs).frobenius_norm() * obs.inverse_rate();
    let shape = obs.shape().clone();
    let mut idx = vec![0usize; shape.order()];
    let mut cur = init.clone();
    let mut cur_dense = cur.reconstruct();
    let mut trajectory = truth.map(|t| rel_error(&cur_dense, t).map(|e| vec![e])).transpose()?;
    let mut taken = 0;
    let loss = |f: &TuckerFactorization, idx: &mut [usize]| -> f64 {
        obs.samples().iter().map(|o| (f.entry_at_offset(&shape, o.offset, idx) - o.y).powi(2)).sum()
    };
    let mut cur_loss = loss(&cur, &mut idx);
    for t in 1..=cfg.rgd_steps {
        let grad: Vec<(usize, f64)> = obs
            .samples()
            .iter()
            .map(|o| (o.offset, cur.entry_at_offset(&shape, o.offset, &mut idx) - o.y))
            .collect();
        let space = TangentSpace::new(&cur)?;
        let xi = space.project_sparse(&grad)?;
        let mut next = space.retract(&xi, -step)?;
        if cfg.backtracking {
            let mut step = step;
            let mut next_loss = loss(&next, &mut idx);
            let mut halvings = 0;
            while next_loss > cur_loss && halvings < MAX_HALVINGS {
                step *= 0.5;
                halvings += 1;
                next = space.retract(&xi, -step)?;
                next_loss = loss(&next, &mut idx);
            }
            cur_loss = next_loss;
        }
        let next_dense = next.reconstruct();
        let norm = next_dense.frobenius_norm();
        if !norm.is_finite() || norm > guard {
            return Err(Error::Divergence { step: t, norm, guard });
        }
        let change = next_dense.sub(&cur_dense)?.frobenius_norm() / cur_dense.frobenius_norm().max(f64::MIN_POSITIVE);
        if let (Some(tr), Some(truth)) = (trajectory.as_mut(), truth) {
            tr.push(rel_error(&next_dense, truth)?);
        }
        cur = next;
        cur_dense = next_dense;
        taken = t;
        if change < cfg.tolerance {
            break;
        }
    }
    Ok(CompletionResult::finish(cur, trajectory, taken))
}

/// One pass of online Riemannian gradient descent, one sample per step.
///
/// Each gradient `(⟨T, X_t⟩ − Y_t)·X_t` is rank one, so projection and
/// retraction stay in the factored representation.
pub fn rgd_online(
    obs: &ObservationSet,
    init: &TuckerFactorization,
    cfg: &EstimatorConfig,
    truth: Option<&DenseTensor>,
) -> Result<CompletionResult> {
    check(obs, init, truth)?;
    cfg.validate(init)?;
    let shape = obs.shape().clone();
    let eta = match cfg.step_size {
        StepSize::Default => cfg.online_c0 * obs.inverse_rate() * (shape.max_dim() as f64).ln(),
        StepSize::Fixed(s) => s,
    };
    let guard = 1e3 * observation_tensor(obs).frobenius_norm() * obs.inverse_rate();
    let mut idx = vec![0usize; shape.order()];
    let mut cur = init.clone();
    let mut trajectory = truth.map(|t| rel_error(&cur.reconstruct(), t).map(|e| vec![e])).transpose()?;
    let mut taken = 0;
    if eta > 0.0 {
        for (t, o) in obs.samples().iter().enumerate() {
            let res = cur.entry_at_offset(&shape, o.offset, &mut idx) - o.y;
            if res == 0.0 {
                continue;
            }
            let space = TangentSpace::new(&cur)?;
            let xi = space.project_sparse(&[(o.offset, res)])?;
            let next = space.retract(&xi, -eta)?;
            let norm = next.core().frobenius_norm();
            if !norm.is_finite() || norm > guard {
                return Err(Error::Divergence { step: t + 1, norm, guard });
            }
            cur = next;
            taken = t + 1;
        }
    }
    if let (Some(tr), Some(truth)) = (trajectory.as_mut(), truth) {
        tr.push(rel_error(&cur.reconstruct(), truth)?);
    }
    Ok(CompletionResult::finish(cur, trajectory, taken))
}
