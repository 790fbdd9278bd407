use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use tensor_inference::estimators::{complete, Estimator, EstimatorConfig, StepSize};
use tensor_inference::harness::{
    classify_config, classify_regime, run_experiment, ExperimentConfig, ExperimentKind, RunOptions,
};
use tensor_inference::inference::{InferenceSession, TangentAt, VarianceMode};
use tensor_inference::io;
use tensor_inference::sampling::{generate_ground_truth, sample_observations, GroundTruthSpec, NoiseModel};
use tensor_inference::{DenseTensor, Error, MultilinearRank, Shape};

const FORMATS: &str = "\
File formats:
  tensor JSON         {\"shape\": [d1, ..., dm], \"data\": [...]}, last index varies fastest
  factorization JSON  {\"core\": tensor, \"factors\": [{\"rows\", \"cols\", \"data\"}, ...], \"diagnostics\"?}
                      matrix data is row-major
  observations CSV    header i1,...,im,y; 1-based indices; one sample per row
  linear form CSV     header i1,...,im,w; 1-based indices
  experiment config   JSON with \"schema_version\" \"1.x\"; see configs/ for examples

Exit codes: 0 ok, 2 usage or parse error, 3 numeric failure, 4 config schema violation.";

#[derive(Parser)]
#[command(name = "tensor-inference", version, about = "Low-rank tensor completion and inference for linear forms")]
#[command(after_help = FORMATS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a low-rank Tucker tensor from noisy entries.
    #[command(after_help = FORMATS)]
    Complete(CompleteArgs),
    /// Debiased point estimate, standard error and confidence interval for a linear form.
    #[command(after_help = FORMATS)]
    Infer(InferArgs),
    /// Monte Carlo study of the studentized statistic.
    #[command(after_help = FORMATS)]
    SimulateClt(SimulateArgs),
    /// Monte Carlo study of average interval coverage over a family of forms.
    #[command(after_help = FORMATS)]
    SimulateCoverage(SimulateArgs),
    /// Place a signal-to-noise ratio and sample size among the regions A to E.
    #[command(after_help = FORMATS)]
    ClassifyRegime(RegimeArgs),
    /// Draw a random incoherent Tucker tensor.
    #[command(after_help = FORMATS)]
    GenTruth(GenTruthArgs),
    /// Draw uniform noisy observations of a tensor.
    #[command(after_help = FORMATS)]
    SampleObs(SampleArgs),
}

#[derive(Args)]
struct CompleteArgs {
    /// Observations CSV.
    #[arg(long)]
    obs: PathBuf,
    /// Tensor dimensions d1,...,dm; inferred from the largest indices when omitted.
    #[arg(long, value_delimiter = ',')]
    shape: Option<Vec<usize>>,
    /// Multilinear rank r1,...,rm.
    #[arg(long, value_delimiter = ',', required = true)]
    rank: Vec<usize>,
    /// One of hosvd, diag_deletion, debias_power, rgd_offline, rgd_online.
    #[arg(long)]
    estimator: String,
    /// Starting factorization JSON for the iterative estimators (default: diagonal deletion).
    #[arg(long)]
    init: Option<PathBuf>,
    /// Offline gradient steps.
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Fixed step size instead of the default schedule.
    #[arg(long)]
    step_size: Option<f64>,
    /// Disable step halving in offline gradient descent.
    #[arg(long)]
    no_backtracking: bool,
    /// Truth (tensor or factorization JSON); prints the relative error.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output factorization JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    obs: PathBuf,
    /// Initial estimate (factorization JSON).
    #[arg(long)]
    init: PathBuf,
    /// Linear form CSV.
    #[arg(long)]
    form: PathBuf,
    /// Miscoverage level of the interval.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// homo or hetero.
    #[arg(long, default_value = "homo")]
    variance: String,
    /// Where the form is projected: init or final.
    #[arg(long, default_value = "init")]
    tangent_at: String,
    /// Truth (tensor or factorization JSON); adds the studentized statistic.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Result JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all logical cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved config and exit.
    #[arg(long)]
    dry_run: bool,
    /// Report JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-trial samples CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RegimeArgs {
    /// Experiment config; snr is lambda_min over the largest noise sd.
    #[arg(long, conflicts_with_all = ["snr", "n", "shape"])]
    config: Option<PathBuf>,
    #[arg(long, requires_all = ["n", "shape"])]
    snr: Option<f64>,
    #[arg(long, requires_all = ["snr", "shape"])]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',', requires_all = ["snr", "n"])]
    shape: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenTruthArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    shape: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    rank: Vec<usize>,
    /// Smallest singular value over the mode unfoldings.
    #[arg(long)]
    lambda_min: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Factorization JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write the full tensor JSON.
    #[arg(long)]
    dense_out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Tensor or factorization JSON.
    #[arg(long)]
    truth: PathBuf,
    /// Number of samples.
    #[arg(long, conflicts_with = "p", required_unless_present = "p")]
    n: Option<usize>,
    /// Sampling rate; n = round(p·d*).
    #[arg(long)]
    p: Option<f64>,
    /// gaussian, bernoulli, poisson or exponential.
    #[arg(long, default_value = "gaussian")]
    noise: String,
    /// Gaussian noise sd.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Observations CSV.
    #[arg(long)]
    out: PathBuf,
}

/// An error tagged with the pipeline stage that raised it.
struct Failure {
    stage: &'static str,
    error: Error,
}

type Outcome<T> = std::result::Result<T, Failure>;

trait Stage<T> {
    fn at(self, stage: &'static str) -> Outcome<T>;
}

impl<T> Stage<T> for tensor_inference::Result<T> {
    fn at(self, stage: &'static str) -> Outcome<T> {
        self.map_err(|error| Failure { stage, error })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Schema(_) => 4,
        e if e.is_numeric() => 3,
        _ => 2,
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

/// Writes a line to stdout; a closed pipe ends the process quietly.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{text}").and_then(|_| out.flush()) {
        if e.kind() == ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error [output]: {e}");
        std::process::exit(2);
    }
}

fn read(path: &Path) -> Outcome<String> {
    io::read_text(path).at("read")
}

fn write(path: &Path, text: &str) -> Outcome<()> {
    io::write_text(path, text).at("write")
}

/// A tensor file, or a factorization file expanded to its full tensor.
fn read_dense(path: &Path) -> Outcome<DenseTensor> {
    let text = read(path)?;
    let is_factorization = serde_json::from_str::<Value>(&text).map(|v| v.get("core").is_some()).unwrap_or(false);
    if is_factorization {
        Ok(io::factorization_from_json(&text).at("read truth")?.reconstruct())
    } else {
        io::tensor_from_json(&text).at("read truth")
    }
}

fn rel_error(est: &DenseTensor, truth: &DenseTensor) -> Outcome<f64> {
    Ok(est.sub(truth).at("compare with truth")?.frobenius_norm() / truth.frobenius_norm())
}

fn run_complete(a: CompleteArgs) -> Outcome<()> {
    let shape = a.shape.map(Shape::new).transpose().map_err(|e| Error::Parse(e.to_string())).at("parse shape")?;
    let obs = io::observations_from_csv(&read(&a.obs)?, shape.as_ref()).at("read observations")?;
    let rank = MultilinearRank::new(a.rank).at("parse rank")?;
    rank.validate_for(obs.shape()).at("parse rank")?;
    let estimator: Estimator = a.estimator.parse().at("parse estimator")?;
    let init = match &a.init {
        Some(p) => Some(io::factorization_from_json(&read(p)?).at("read init")?),
        None => None,
    };
    let mut cfg = EstimatorConfig::new(rank);
    cfg.rgd_steps = a.steps;
    cfg.backtracking = !a.no_backtracking;
    if let Some(s) = a.step_size {
        cfg.step_size = StepSize::Fixed(s);
    }
    let result = complete(estimator, &obs, init.as_ref(), &cfg).at(estimator.name())?;
    write(&a.out, &io::factorization_to_json(&result.estimate))?;
    let mut summary = json!({"estimator": estimator.name(), "steps_taken": result.steps_taken});
    if let Some(t) = &a.truth {
        let truth = read_dense(t)?;
        summary["relative_error"] = json!(rel_error(&result.estimate.reconstruct(), &truth)?);
    }
    emit(&summary.to_string());
    Ok(())
}

fn run_infer(a: InferArgs) -> Outcome<()> {
    let init = io::factorization_from_json(&read(&a.init)?).at("read init")?;
    let obs = io::observations_from_csv(&read(&a.obs)?, Some(&init.shape())).at("read observations")?;
    let form = io::form_from_csv(&read(&a.form)?, obs.shape()).at("read form")?;
    let mode: VarianceMode = a.variance.parse().at("parse variance mode")?;
    let tangent_at: TangentAt = a.tangent_at.parse().at("parse tangent point")?;
    let truth_value = match &a.truth {
        Some(t) => Some(form.apply(&read_dense(t)?).at("read truth")?),
        None => None,
    };
    let session = InferenceSession::new(&obs, &init, tangent_at).at("debias")?;
    let result = session.infer(&form, a.alpha, mode, truth_value).at("inference")?;
    write(&a.out, &serde_json::to_string_pretty(&result).expect("result serializes"))
}

fn load_config(path: &Path, seed: Option<u64>) -> Outcome<ExperimentConfig> {
    let mut v: Value = serde_json::from_str(&read(path)?).map_err(|e| Error::Parse(format!("config: {e}"))).at("read config")?;
    if let Some(obj) = v.as_object_mut() {
        if seed.is_some() || !obj.contains_key("seed") {
            obj.insert("seed".into(), json!(resolve_seed(seed)));
        }
    }
    ExperimentConfig::from_value(&v).at("validate config")
}

fn run_simulate(a: SimulateArgs, kind: ExperimentKind) -> Outcome<()> {
    let cfg = load_config(&a.config, a.seed)?;
    if cfg.experiment != kind {
        let msg = format!("experiment: config describes {:?}, this command runs {kind:?}", cfg.experiment);
        return Err(Error::Schema(vec![msg])).at("validate config");
    }
    if a.dry_run {
        emit(&cfg.to_json_pretty());
        return Ok(());
    }
    let report = run_experiment(&cfg, RunOptions { threads: a.threads }).at("experiment")?;
    if let Some(p) = &a.csv {
        write(p, &report.samples_csv())?;
    }
    match &a.out {
        Some(p) => write(p, &report.to_json_pretty())?,
        None => emit(&report.to_json_pretty()),
    }
    if !report.failures.is_empty() {
        eprintln!("{} of {} trials failed", report.failures.len(), cfg.trials);
    }
    Ok(())
}

fn run_regime(a: RegimeArgs) -> Outcome<()> {
    let report = match (a.config, a.snr, a.n, a.shape) {
        (Some(p), ..) => classify_config(&load_config(&p, Some(0))?),
        (None, Some(snr), Some(n), Some(shape)) => {
            let shape = Shape::new(shape).map_err(|e| Error::Parse(e.to_string())).at("parse shape")?;
            classify_regime(snr, n, &shape)
        }
        _ => return Err(Error::Parse("give --config or all of --snr, --n, --shape".into())).at("parse arguments"),
    };
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match &a.out {
        Some(p) => write(p, &text),
        None => {
            emit(&text);
            Ok(())
        }
    }
}

fn run_gen_truth(a: GenTruthArgs) -> Outcome<()> {
    let shape = Shape::new(a.shape).map_err(|e| Error::Parse(e.to_string())).at("parse shape")?;
    let rank = MultilinearRank::new(a.rank).at("parse rank")?;
    let spec = GroundTruthSpec::new(shape, rank, a.lambda_min, resolve_seed(a.seed));
    let truth = generate_ground_truth(&spec).at("generate truth")?;
    write(&a.out, &io::factorization_to_json(&truth))?;
    if let Some(p) = &a.dense_out {
        write(p, &io::tensor_to_json(&truth.reconstruct()))?;
    }
    Ok(())
}

fn run_sample(a: SampleArgs) -> Outcome<()> {
    let truth = read_dense(&a.truth)?;
    let n = match (a.n, a.p) {
        (Some(n), _) => n,
        (None, Some(p)) if p > 0.0 && p <= 1.0 => ((p * truth.shape().numel() as f64).round() as usize).max(1),
        _ => return Err(Error::Parse("--p must lie in (0, 1]".into())).at("parse arguments"),
    };
    let noise = match a.noise.as_str() {
        "gaussian" => NoiseModel::Gaussian { sigma: a.sigma },
        "bernoulli" => NoiseModel::Bernoulli,
        "poisson" => NoiseModel::Poisson,
        "exponential" => NoiseModel::Exponential,
        other => return Err(Error::Parse(format!("unknown noise model {other:?}"))).at("parse arguments"),
    };
    let obs = sample_observations(&truth, n, &noise, resolve_seed(a.seed)).at("sample")?;
    write(&a.out, &io::observations_to_csv(&obs))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Complete(a) => run_complete(a),
        Command::Infer(a) => run_infer(a),
        Command::SimulateClt(a) => run_simulate(a, ExperimentKind::Clt),
        Command::SimulateCoverage(a) => run_simulate(a, ExperimentKind::Coverage),
        Command::ClassifyRegime(a) => run_regime(a),
        Command::GenTruth(a) => run_gen_truth(a),
        Command::SampleObs(a) => run_sample(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { stage, error }) => {
            eprintln!("error [{stage}]: {error}");
            if let Error::Schema(list) = &error {
                for e in list {
                    eprintln!("  {e}");
                }
            }
            ExitCode::from(exit_code(&error))
        }
    }
}

