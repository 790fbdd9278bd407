//! Completion estimators.

mod debias;
mod init;
mod rgd;
pub mod tangent;

use std::fmt;
use std::str::FromStr;

pub use debias::{debias_power_iteration, debiased_tensor, power_iteration, residuals};
pub use init::{diag_deletion_init, make_independent_init, make_independent_init_with, observation_tensor};
pub use rgd::{rgd_offline, rgd_online, CompletionResult, EstimatorConfig, StepSize};
pub use tangent::{tangent_project_at, TangentSpace, TangentVector};

use crate::error::{Error, Result};
use crate::sampling::ObservationSet;
use crate::tucker::{hosvd, TuckerFactorization};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    /// Plain HOSVD of `(d*/n)·T_obv`.
    Hosvd,
    DiagDeletion,
    DebiasPower,
    RgdOffline,
    RgdOnline,
}

impl Estimator {
    pub const ALL: [Estimator; 5] =
        [Estimator::Hosvd, Estimator::DiagDeletion, Estimator::DebiasPower, Estimator::RgdOffline, Estimator::RgdOnline];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Hosvd => "hosvd",
            Estimator::DiagDeletion => "diag_deletion",
            Estimator::DebiasPower => "debias_power",
            Estimator::RgdOffline => "rgd_offline",
            Estimator::RgdOnline => "rgd_online",
        }
    }

    pub fn needs_init(self) -> bool {
        matches!(self, Estimator::DebiasPower | Estimator::RgdOffline | Estimator::RgdOnline)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown estimator {s:?}")))
    }
}

/// Runs `estimator`; iterative ones start from `init`, or from the
/// diagonal-deletion estimate when none is given.
pub fn complete(
    estimator: Estimator,
    obs: &ObservationSet,
    init: Option<&TuckerFactorization>,
    cfg: &EstimatorConfig,
) -> Result<CompletionResult> {
    let start = |init: Option<&TuckerFactorization>| match init {
        Some(f) => Ok(f.clone()),
        None => diag_deletion_init(obs, &cfg.rank),
    };
    let plain = |f: TuckerFactorization| CompletionResult {
        diagnostics: f.diagnostics().ok(),
        estimate: f,
        trajectory: None,
        steps_taken: 0,
    };
    match estimator {
        Estimator::Hosvd => {
            if obs.is_empty() {
                return Err(Error::EmptyObservations);
            }
            Ok(plain(hosvd(&observation_tensor(obs).scale(obs.inverse_rate()), &cfg.rank)?))
        }
        Estimator::DiagDeletion => Ok(plain(diag_deletion_init(obs, &cfg.rank)?)),
        Estimator::DebiasPower => Ok(plain(debias_power_iteration(obs, &start(init)?)?)),
        Estimator::RgdOffline => rgd_offline(obs, &start(init)?, cfg, None),
        Estimator::RgdOnline => rgd_online(obs, &start(init)?, cfg, None),
    }
}
