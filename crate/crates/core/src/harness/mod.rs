//! Monte Carlo experiments: studentized-statistic normality, interval coverage
//! and regime classification.
//!
//! Trial `k` draws its observations and initialization from the streams
//! `(seed, k, ·)`, so the report does not depend on how trials are scheduled.

mod config;
mod regime;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use config::{ExperimentConfig, ExperimentKind, FormsSpec, InitSpec, NoiseSpec, SamplingSpec, SCHEMA_VERSION};
pub use regime::{classify_regime, Region, RegimeReport, Threshold};

use crate::error::{Error, Result};
use crate::estimators::{
    diag_deletion_init, make_independent_init_with, rgd_offline, tangent_project_at, EstimatorConfig,
};
use crate::inference::{InferenceSession, LinearForm, TangentAt};
use crate::normal;
use crate::rng::{stream, Purpose};
use crate::sampling::{
    generate_ground_truth, generate_ground_truth_with, sample_observations_with, sd_tensor, uniform_sd_field,
    GroundTruthSpec, NoiseModel,
};
use crate::tensor::{DenseTensor, Shape};
use crate::tucker::TuckerFactorization;

/// Kolmogorov–Smirnov distance between the sample and `N(0, 1)`.
pub fn ks_distance(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(k, x)| {
            let f = normal::cdf(*x);
            (f - k as f64 / n).max((k + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialStatistic {
    pub trial: usize,
    pub statistic: f64,
    pub point_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CltSummary {
    pub truth_value: f64,
    /// `‖P_T(I) ⊙ S‖_F √(d*/n)` at the first truth.
    pub oracle_se: f64,
    pub statistics: Vec<TrialStatistic>,
    pub degenerate_trials: Vec<usize>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub ks: Option<f64>,
    /// Standard deviation of `⟨T̂ − T, I⟩` across trials.
    pub point_error_sd: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialCoverage {
    pub trial: usize,
    pub alpha: f64,
    pub avgcov: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageLevel {
    pub alpha: f64,
    pub nominal: f64,
    pub mean: f64,
    pub sd: f64,
    /// `z_{0.1}·sd`, the spread shown around the mean.
    pub error_bar: f64,
    pub mc_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub forms: usize,
    pub levels: Vec<CoverageLevel>,
    pub trials: Vec<TrialCoverage>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub sample_size: usize,
    pub lambda_min: f64,
    pub trials_completed: usize,
    pub failures: Vec<TrialFailure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clt: Option<CltSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageSummary>,
    /// The only field that differs between identical runs.
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `trial,statistic` or `trial,alpha,avgcov` rows in trial order.
    pub fn samples_csv(&self) -> String {
        let mut out = String::new();
        if let Some(c) = &self.clt {
            out.push_str("trial,statistic\n");
            for s in &c.statistics {
                let _ = writeln!(out, "{},{}", s.trial, s.statistic);
            }
        }
        if let Some(c) = &self.coverage {
            out.push_str("trial,alpha,avgcov\n");
            for t in &c.trials {
                let _ = writeln!(out, "{},{},{}", t.trial, t.alpha, t.avgcov);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses every logical core.
    pub threads: Option<usize>,
}

/// Everything shared by the trials of one experiment.
struct Setup {
    shape: Shape,
    n: usize,
    truth_spec: GroundTruthSpec,
    truth: TuckerFactorization,
    noise: NoiseModel,
    sd: DenseTensor,
    forms: Vec<LinearForm>,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let shape = cfg.shape();
    let truth_spec = GroundTruthSpec::new(shape.clone(), cfg.rank(), cfg.lambda_min(), cfg.seed);
    let truth = generate_ground_truth(&truth_spec)?;
    let noise = match cfg.noise {
        NoiseSpec::Gaussian { sigma } => NoiseModel::Gaussian { sigma },
        NoiseSpec::HeteroUniform { lo, hi } => {
            NoiseModel::CustomSd(uniform_sd_field(&shape, lo, hi, &mut stream(cfg.seed, 0, Purpose::NoiseField))?)
        }
    };
    let sd = sd_tensor(&truth.reconstruct(), &noise)?;
    let forms = build_forms(cfg, &shape)?;
    Ok(Setup { n: cfg.sample_size(), shape, truth_spec, truth, noise, sd, forms })
}

fn zero_based(cell: &[usize]) -> Vec<usize> {
    cell.iter().map(|i| i - 1).collect()
}

fn build_forms(cfg: &ExperimentConfig, shape: &Shape) -> Result<Vec<LinearForm>> {
    let mut rng = stream(cfg.seed, 0, Purpose::Forms);
    match &cfg.forms {
        FormsSpec::Cells { cells } => {
            let cells: Vec<Vec<usize>> = cells.iter().map(|c| zero_based(c)).collect();
            Ok(vec![LinearForm::indicator(shape.clone(), &cells)?])
        }
        FormsSpec::CoverageFamily { anchors, count } => {
            let anchors = anchors.iter().map(|c| shape.offset(&zero_based(c))).collect::<Result<Vec<_>>>()?;
            if anchors.len() >= shape.numel() {
                return Err(Error::InvalidArgument("anchors cover every cell".into()));
            }
            (0..*count)
                .map(|_| {
                    let c = loop {
                        let c = rng.random_range(0..shape.numel());
                        if !anchors.contains(&c) {
                            break c;
                        }
                    };
                    let mut raw: Vec<(usize, f64)> = anchors.iter().map(|a| (*a, 1.0)).collect();
                    raw.push((c, -1.0));
                    LinearForm::from_offsets(shape.clone(), raw)
                })
                .collect()
        }
        FormsSpec::RandomSparse { support, count } => {
            if *support > shape.numel() {
                return Err(Error::InvalidArgument(format!("support {support} exceeds the number of entries")));
            }
            (0..*count)
                .map(|_| {
                    let cells = sample_indices(&mut rng, shape.numel(), *support);
                    let raw = cells.iter().map(|c| (c, if rng.random::<bool>() { 1.0 } else { -1.0 })).collect();
                    LinearForm::from_offsets(shape.clone(), raw)
                })
                .collect()
        }
    }
}

/// The point estimate and interval for every form, from one trial's data.
struct TrialOutcome {
    truth_values: Vec<f64>,
    results: Vec<crate::inference::InferenceResult>,
}

fn run_trial(cfg: &ExperimentConfig, s: &Setup, trial: usize, alpha: f64) -> Result<TrialOutcome> {
    let t = trial as u64;
    let redrawn;
    let truth = if cfg.redraw_truth {
        redrawn = generate_ground_truth_with(&s.truth_spec, &mut stream(cfg.seed, t, Purpose::Truth))?;
        &redrawn
    } else {
        &s.truth
    };
    let dense = truth.reconstruct();
    let obs = sample_observations_with(&dense, s.n, &s.noise, &mut stream(cfg.seed, t, Purpose::Sampling))?;
    let init = match cfg.init {
        InitSpec::Independent { .. } => {
            let target = cfg.target_linf().expect("independent init");
            make_independent_init_with(truth, target, &mut stream(cfg.seed, t, Purpose::Init))?
        }
        InitSpec::Dependent { rgd_steps } => {
            let spectral = diag_deletion_init(&obs, &truth.rank())?;
            let mut ecfg = EstimatorConfig::new(truth.rank());
            ecfg.rgd_steps = rgd_steps;
            rgd_offline(&obs, &spectral, &ecfg, None)?.estimate
        }
    };
    let session = InferenceSession::new(&obs, &init, TangentAt::Init)?;
    let truth_values = s.forms.iter().map(|f| f.apply(&dense)).collect::<Result<Vec<_>>>()?;
    let results = session.infer_many(&s.forms, alpha, cfg.variance_mode, Some(&truth_values))?;
    Ok(TrialOutcome { truth_values, results })
}

fn in_pool<T: Send>(opts: RunOptions, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("thread count must be >= 1".into()));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn oracle_se(s: &Setup, form: &LinearForm) -> Result<f64> {
    let p = tangent_project_at(&s.truth, &form.to_dense())?;
    Ok(p.hadamard(&s.sd)?.frobenius_norm() * (s.shape.numel() as f64 / s.n as f64).sqrt())
}

fn check_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if cfg.experiment != kind {
        return Err(Error::InvalidArgument(format!("config describes a {:?} experiment", cfg.experiment)));
    }
    Ok(())
}

/// Repeats sample → init → debias → studentize for one fixed form.
pub fn run_clt_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentReport> {
    check_kind(cfg, ExperimentKind::Clt)?;
    let start = Instant::now();
    let s = setup(cfg)?;
    let alpha = cfg.alphas[0];
    let outcomes: Vec<Result<TrialOutcome>> =
        in_pool(opts, || (0..cfg.trials).into_par_iter().map(|k| run_trial(cfg, &s, k, alpha)).collect())?;

    let mut failures = Vec::new();
    let mut statistics = Vec::new();
    let mut degenerate_trials = Vec::new();
    let mut errors = Vec::new();
    for (trial, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(o) => {
                let r = &o.results[0];
                errors.push(r.point - o.truth_values[0]);
                match r.statistic {
                    Some(statistic) => {
                        statistics.push(TrialStatistic { trial, statistic, point_error: r.point - o.truth_values[0] })
                    }
                    None => degenerate_trials.push(trial),
                }
            }
            Err(e) => failures.push(TrialFailure { trial, seed: cfg.seed, error: e.to_string() }),
        }
    }
    let stats: Vec<f64> = statistics.iter().map(|t| t.statistic).collect();
    let (mean, variance) = if stats.is_empty() { (None, None) } else { Some(mean_var(&stats)).unzip() };
    let clt = CltSummary {
        truth_value: s.forms[0].apply(&s.truth.reconstruct())?,
        oracle_se: oracle_se(&s, &s.forms[0])?,
        ks: (!stats.is_empty()).then(|| ks_distance(&stats)),
        point_error_sd: (errors.len() > 1).then(|| mean_var(&errors).1.sqrt()),
        statistics,
        degenerate_trials,
        mean,
        variance,
    };
    Ok(ExperimentReport {
        sample_size: s.n,
        lambda_min: cfg.lambda_min(),
        trials_completed: cfg.trials - failures.len(),
        failures,
        clt: Some(clt),
        coverage: None,
        config: cfg.clone(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Fraction of the form family whose interval at each level contains the truth.
pub fn run_coverage_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentReport> {
    check_kind(cfg, ExperimentKind::Coverage)?;
    let start = Instant::now();
    let s = setup(cfg)?;
    // Intervals at other levels rescale the same standard error.
    let base_alpha = cfg.alphas[0];
    let outcomes: Vec<Result<TrialOutcome>> =
        in_pool(opts, || (0..cfg.trials).into_par_iter().map(|k| run_trial(cfg, &s, k, base_alpha)).collect())?;

    let mut failures = Vec::new();
    let mut trials = Vec::new();
    let mut per_level: Vec<Vec<f64>> = vec![Vec::new(); cfg.alphas.len()];
    for (trial, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(o) => {
                for (l, &alpha) in cfg.alphas.iter().enumerate() {
                    let z = normal::upper_quantile(alpha / 2.0);
                    let hits = o
                        .results
                        .iter()
                        .zip(&o.truth_values)
                        .filter(|(r, t)| {
                            let tol = 1e-9 * t.abs().max(1.0);
                            (r.point - **t).abs() <= z * r.se + tol
                        })
                        .count();
                    let avgcov = hits as f64 / o.results.len() as f64;
                    per_level[l].push(avgcov);
                    trials.push(TrialCoverage { trial, alpha, avgcov });
                }
            }
            Err(e) => failures.push(TrialFailure { trial, seed: cfg.seed, error: e.to_string() }),
        }
    }
    let z10 = normal::upper_quantile(0.1);
    let levels = cfg
        .alphas
        .iter()
        .zip(&per_level)
        .map(|(&alpha, xs)| {
            let (mean, var) = if xs.is_empty() { (f64::NAN, f64::NAN) } else { mean_var(xs) };
            let sd = var.sqrt();
            CoverageLevel { alpha, nominal: 1.0 - alpha, mean, sd, error_bar: z10 * sd, mc_se: sd / (xs.len() as f64).sqrt() }
        })
        .collect();
    Ok(ExperimentReport {
        sample_size: s.n,
        lambda_min: cfg.lambda_min(),
        trials_completed: cfg.trials - failures.len(),
        failures,
        clt: None,
        coverage: Some(CoverageSummary { forms: s.forms.len(), levels, trials }),
        config: cfg.clone(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentReport> {
    match cfg.experiment {
        ExperimentKind::Clt => run_clt_experiment(cfg, opts),
        ExperimentKind::Coverage => run_coverage_experiment(cfg, opts),
    }
}

/// Regime of an experiment: `snr = λ_min / σ_max` at its sample size.
pub fn classify_config(cfg: &ExperimentConfig) -> RegimeReport {
    let sigma = cfg.noise.sigma_max();
    let snr = if sigma > 0.0 { cfg.lambda_min() / sigma } else { f64::INFINITY };
    classify_regime(snr, cfg.sample_size(), &cfg.shape())
}
