//! Ground-truth generation and observation sampling under the trace-regression
//! model `Y_i = ⟨T, X_i⟩ + ξ_i`, with `X_i` drawn uniformly (with replacement)
//! from the canonical basis.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::svd_top_r;
use crate::matrix::Matrix;
use crate::rng::{stream, Purpose};
use crate::tensor::{one_based, DenseTensor, Shape};
use crate::tucker::{MultilinearRank, TuckerFactorization};

/// A single sample: linear offset of the observed cell and its value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub offset: usize,
    pub y: f64,
}

/// Samples `{(X_i, Y_i)}`; duplicate cells are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    shape: Shape,
    samples: Vec<Observation>,
}

impl ObservationSet {
    /// From 0-based multi-indices.
    pub fn new(shape: Shape, samples: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let mut out = Vec::with_capacity(samples.len());
        for (idx, y) in samples {
            if !y.is_finite() {
                return Err(Error::NonFinite(format!("observation at {:?}", one_based(&idx))));
            }
            out.push(Observation { offset: shape.offset(&idx)?, y });
        }
        Ok(ObservationSet { shape, samples: out })
    }

    pub fn from_observations(shape: Shape, samples: Vec<Observation>) -> Result<Self> {
        if let Some(o) = samples.iter().find(|o| o.offset >= shape.numel() || !o.y.is_finite()) {
            return Err(Error::InvalidArgument(format!("observation offset {} invalid or value non-finite", o.offset)));
        }
        Ok(ObservationSet { shape, samples })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn samples(&self) -> &[Observation] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn index(&self, i: usize) -> Vec<usize> {
        self.shape.unravel(self.samples[i].offset)
    }

    /// d*/n, the inverse sampling rate.
    pub fn inverse_rate(&self) -> f64 {
        self.shape.numel() as f64 / self.samples.len() as f64
    }
}

/// Conditional law of `Y` given the sampled cell `ω`.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseModel {
    /// `Y = [T]_ω + σ·z`.
    Gaussian { sigma: f64 },
    /// `Y ~ Bernoulli([T]_ω)`, needs `0 ≤ T ≤ 1`.
    Bernoulli,
    /// `Y ~ Poisson([T]_ω)`, needs `T > 0`.
    Poisson,
    /// `Y ~ Exponential(mean [T]_ω)`, needs `T > 0`.
    Exponential,
    /// `Y = [T]_ω + [S]_ω·z` for a given standard-deviation tensor.
    CustomSd(DenseTensor),
}

impl NoiseModel {
    /// Checks the model's requirements on every entry of `t`.
    pub fn check(&self, t: &DenseTensor) -> Result<()> {
        let fail = |off: usize, reason: String| Error::NoisePrecondition { index: one_based(&t.shape().unravel(off)), reason };
        match self {
            NoiseModel::Gaussian { sigma } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(Error::InvalidArgument(format!("gaussian sigma must be >= 0, got {sigma}")));
                }
            }
            NoiseModel::Bernoulli => {
                if let Some(p) = t.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
                    return Err(fail(p, format!("bernoulli mean {} outside [0, 1]", t.data()[p])));
                }
            }
            NoiseModel::Poisson | NoiseModel::Exponential => {
                if let Some(p) = t.data().iter().position(|v| *v <= 0.0) {
                    return Err(fail(p, format!("mean {} must be positive", t.data()[p])));
                }
            }
            NoiseModel::CustomSd(s) => {
                if s.shape() != t.shape() {
                    return Err(Error::ShapeMismatch { left: s.shape().dims().to_vec(), right: t.shape().dims().to_vec() });
                }
                if let Some(p) = s.data().iter().position(|v| *v < 0.0) {
                    return Err(fail(p, format!("standard deviation {} is negative", s.data()[p])));
                }
            }
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, mean: f64, offset: usize, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sigma * z
            }
            NoiseModel::Bernoulli => {
                if Bernoulli::new(mean).expect("checked").sample(rng) {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseModel::Poisson => Poisson::new(mean).expect("checked").sample(rng),
            NoiseModel::Exponential => Exp::new(1.0 / mean).expect("checked").sample(rng),
            NoiseModel::CustomSd(s) => {
                let z: f64 = rng.sample(StandardNormal);
                mean + s.data()[offset] * z
            }
        }
    }
}

/// Entrywise noise standard deviation `[S]_ω` implied by the model.
pub fn sd_tensor(t: &DenseTensor, noise: &NoiseModel) -> Result<DenseTensor> {
    noise.check(t)?;
    let map = |f: &dyn Fn(f64) -> f64| DenseTensor::new(t.shape().clone(), t.data().iter().map(|v| f(*v)).collect());
    match noise {
        NoiseModel::Gaussian { sigma } => Ok(DenseTensor::filled(t.shape().clone(), *sigma)),
        NoiseModel::Bernoulli => map(&|v| (v * (1.0 - v)).sqrt()),
        NoiseModel::Poisson => map(&|v| v.sqrt()),
        NoiseModel::Exponential => map(&|v| v),
        NoiseModel::CustomSd(s) => Ok(s.clone()),
    }
}

/// Draws `n` i.i.d. uniform cells (with replacement) and their noisy values.
pub fn sample_observations_with<R: Rng + ?Sized>(
    t: &DenseTensor,
    n: usize,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<ObservationSet> {
    noise.check(t)?;
    let total = t.shape().numel();
    let samples = (0..n)
        .map(|_| {
            let offset = rng.random_range(0..total);
            let y = noise.draw(t.data()[offset], offset, rng);
            Observation { offset, y }
        })
        .collect();
    Ok(ObservationSet { shape: t.shape().clone(), samples })
}

/// [`sample_observations_with`] on the sampling stream of `seed`.
pub fn sample_observations(t: &DenseTensor, n: usize, noise: &NoiseModel, seed: u64) -> Result<ObservationSet> {
    let mut rng = stream(seed, 0, Purpose::Sampling);
    sample_observations_with(t, n, noise, &mut rng)
}

/// Heteroskedastic sd field `S = lo + (hi − lo)·u(ω)` with seeded uniform `u`.
pub fn uniform_sd_field<R: Rng + ?Sized>(shape: &Shape, lo: f64, hi: f64, rng: &mut R) -> Result<DenseTensor> {
    if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("sd range [{lo}, {hi}] is invalid")));
    }
    let data = (0..shape.numel()).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    DenseTensor::new(shape.clone(), data)
}

/// Recipe for a random incoherent Tucker tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthSpec {
    pub shape: Shape,
    pub rank: MultilinearRank,
    /// Target smallest singular value over all mode unfoldings.
    pub lambda_min: f64,
    /// Superdiagonal entries grow as `λ_min·(1 + spread·k)`.
    pub spread: f64,
    /// Cap on the growth factor above (κ₀).
    pub kappa_cap: f64,
    pub seed: u64,
}

impl GroundTruthSpec {
    pub fn new(shape: Shape, rank: MultilinearRank, lambda_min: f64, seed: u64) -> Self {
        GroundTruthSpec { shape, rank, lambda_min, spread: 0.1, kappa_cap: 10.0, seed }
    }
}

/// Standard-Gaussian matrix.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Orthogonal `n × n` matrix from the singular vectors of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Matrix> {
    Ok(svd_top_r(&gaussian_matrix(n, n, rng), n)?.u)
}

/// Random Tucker tensor with Gaussian-derived (incoherent) factors.
///
/// Factors are the top-r_j left singular subspaces of `d_j × r_j` Gaussian
/// matrices. The core starts superdiagonal with entries
/// `λ_min·min(1 + spread·k, κ₀)`; unequal ranks get an additional Gaussian
/// fill so every unfolding has full row rank. Each mode is then rotated by a
/// random orthogonal matrix and the core rescaled so the smallest unfolding
/// singular value equals `lambda_min`.
pub fn generate_ground_truth(spec: &GroundTruthSpec) -> Result<TuckerFactorization> {
    generate_ground_truth_with(spec, &mut stream(spec.seed, 0, Purpose::Truth))
}

/// [`generate_ground_truth`] drawing from `rng` instead of `spec.seed`.
pub fn generate_ground_truth_with<R: Rng + ?Sized>(spec: &GroundTruthSpec, rng: &mut R) -> Result<TuckerFactorization> {
    spec.rank.validate_for(&spec.shape)?;
    let ranks = spec.rank.ranks();
    let rstar = spec.rank.product();
    for (j, &r) in ranks.iter().enumerate() {
        if r > rstar / r {
            return Err(Error::RankOutOfRange(format!(
                "rank {r} in mode {} exceeds the product of the other ranks",
                j + 1
            )));
        }
    }
    if !(spec.lambda_min.is_finite() && spec.lambda_min > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda_min must be positive, got {}", spec.lambda_min)));
    }
    let mut factors = Vec::with_capacity(ranks.len());
    for (j, &r) in ranks.iter().enumerate() {
        let g = gaussian_matrix(spec.shape.dim(j), r, rng);
        factors.push(svd_top_r(&g, r)?.u);
    }

    let core_shape = spec.rank.core_shape()?;
    let rmin = *ranks.iter().min().expect("order >= 2");
    let equal = ranks.iter().all(|&r| r == rmin);
    let mut core = DenseTensor::from_fn(core_shape.clone(), |idx| {
        if idx.iter().all(|&i| i == idx[0]) {
            spec.lambda_min * (1.0 + spec.spread * idx[0] as f64).min(spec.kappa_cap)
        } else {
            0.0
        }
    });
    if !equal {
        let fill = DenseTensor::from_fn(core_shape, |_| rng.sample::<f64, _>(StandardNormal) * spec.lambda_min);
        core = core.add(&fill)?;
    }
    for (j, &r) in ranks.iter().enumerate() {
        let q = random_orthogonal(r, rng)?;
        core = core.mode_product(j, &q)?;
    }
    let mut smallest = f64::INFINITY;
    for j in 0..ranks.len() {
        let s = svd_top_r(&core.unfold(j)?, ranks[j])?;
        smallest = smallest.min(*s.singular_values.last().expect("rank >= 1"));
    }
    if smallest <= 1e-12 * spec.lambda_min {
        return Err(Error::RankOutOfRange("generated core is rank deficient".into()));
    }
    let core = core.scale(spec.lambda_min / smallest);
    TuckerFactorization::new(core, factors)
}
