use proptest::prelude::*;

use tensor_inference::estimators::{
    debias_power_iteration, debiased_tensor, diag_deletion_init, make_independent_init, rgd_offline, rgd_online,
    tangent_project_at, EstimatorConfig, StepSize,
};
use tensor_inference::rng::{stream, Purpose, StreamRng};
use tensor_inference::sampling::{
    gaussian_matrix, generate_ground_truth, random_orthogonal, sample_observations, GroundTruthSpec, NoiseModel,
    ObservationSet,
};
use tensor_inference::{DenseTensor, Matrix, MultilinearRank, Shape, TuckerFactorization};

fn rng(seed: u64) -> StreamRng {
    stream(seed, 0, Purpose::Custom)
}

fn cube(d: usize) -> Shape {
    Shape::new(vec![d, d, d]).unwrap()
}

fn truth(d: usize, r: usize, lambda: f64, seed: u64) -> TuckerFactorization {
    generate_ground_truth(&GroundTruthSpec::new(cube(d), MultilinearRank::uniform(3, r).unwrap(), lambda, seed)).unwrap()
}

/// Every cell exactly once, noiseless.
fn full_observation(t: &DenseTensor) -> ObservationSet {
    let s = t.shape().clone();
    let samples = (0..s.numel()).map(|o| (s.unravel(o), t.data()[o])).collect();
    ObservationSet::new(s, samples).unwrap()
}

fn rel(a: &DenseTensor, b: &DenseTensor) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn hadamard(d: usize) -> Matrix {
    Matrix::from_fn(d, d, |i, j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 } / (d as f64).sqrt())
}

fn flat_truth(d: usize, r: usize) -> TuckerFactorization {
    let cols: Vec<usize> = (1..=r).collect();
    let u = hadamard(d).select_columns(&cols);
    let core = DenseTensor::from_fn(Shape::new(vec![r, r, r]).unwrap(), |i| {
        if i[0] == i[1] && i[1] == i[2] {
            10.0 * (r - i[0]) as f64
        } else {
            0.0
        }
    });
    TuckerFactorization::new(core, vec![u.clone(), u.clone(), u]).unwrap()
}

#[test]
fn debiased_tensor_matches_hand_sum() {
    let s = Shape::new(vec![2, 2, 2]).unwrap();
    let a = [1.0, 2.0];
    let t = DenseTensor::outer(&[a.to_vec(), a.to_vec(), a.to_vec()]).unwrap();
    let init = tensor_inference::tucker::hosvd(&t, &MultilinearRank::uniform(3, 1).unwrap()).unwrap();
    let obs = ObservationSet::new(
        s.clone(),
        vec![(vec![0, 0, 0], 1.5), (vec![1, 1, 1], 7.0), (vec![0, 1, 0], 2.0), (vec![0, 0, 0], 0.0)],
    )
    .unwrap();
    let got = debiased_tensor(&obs, &init).unwrap();
    let mut want = t.clone();
    let scale = 8.0 / 4.0;
    want.data_mut()[0] += scale * ((1.5 - 1.0) + (0.0 - 1.0));
    want.data_mut()[7] += scale * (7.0 - 8.0);
    want.data_mut()[2] += scale * (2.0 - 2.0);
    assert!(got.sub(&want).unwrap().frobenius_norm() <= 1e-12);
}

#[test]
fn debias_power_keeps_exact_truth_under_full_noiseless_observation() {
    let f = truth(8, 2, 20.0, 3);
    let t = f.reconstruct();
    let out = debias_power_iteration(&full_observation(&t), &f).unwrap();
    assert!(rel(&out.reconstruct(), &t) <= 1e-12);
}

#[test]
fn diag_deletion_is_exact_for_flat_factors_under_full_observation() {
    for (d, r) in [(8, 2), (16, 3)] {
        let f = flat_truth(d, r);
        let t = f.reconstruct();
        let est = diag_deletion_init(&full_observation(&t), &f.rank()).unwrap();
        assert!(rel(&est.reconstruct(), &t) <= 1e-8, "d={d} r={r}");
    }
}

fn diag_deletion_median(d: usize, p: f64) -> f64 {
    let rank = MultilinearRank::uniform(3, 2).unwrap();
    let n = (p * (d * d * d) as f64) as usize;
    median(
        (0..20)
            .map(|seed| {
                let t = truth(d, 2, 50.0, seed).reconstruct();
                let obs = sample_observations(&t, n, &NoiseModel::Gaussian { sigma: 0.01 }, 500 + seed).unwrap();
                rel(&diag_deletion_init(&obs, &rank).unwrap().reconstruct(), &t)
            })
            .collect(),
    )
}

#[test]
fn diag_deletion_improves_with_sampling() {
    let sparse = diag_deletion_median(20, 0.3);
    let dense = diag_deletion_median(20, 4.0);
    let larger = diag_deletion_median(40, 1.0);
    assert!(sparse <= 0.6, "{sparse}");
    assert!(dense <= 0.3 && dense < sparse, "{dense}");
    assert!(larger <= 0.25, "{larger}");
}

#[test]
fn rgd_stays_at_the_truth_without_noise() {
    let f = truth(10, 2, 20.0, 4);
    let t = f.reconstruct();
    let obs = sample_observations(&t, 400, &NoiseModel::Gaussian { sigma: 0.0 }, 9).unwrap();
    let cfg = EstimatorConfig::new(f.rank());
    let off = rgd_offline(&obs, &f, &cfg, None).unwrap();
    assert!(rel(&off.estimate.reconstruct(), &t) <= 1e-12);
    let on = rgd_online(&obs, &f, &cfg, None).unwrap();
    assert!(rel(&on.estimate.reconstruct(), &t) <= 1e-12);
}

#[test]
fn one_unit_step_lands_on_truth_with_shared_subspaces() {
    let f = truth(6, 2, 10.0, 5);
    let t = f.reconstruct();
    let (core, factors) = f.clone().into_parts();
    let init = TuckerFactorization::new(core.scale(0.4), factors).unwrap();
    let cfg = EstimatorConfig { rgd_steps: 1, backtracking: false, ..EstimatorConfig::new(f.rank()) };
    let out = rgd_offline(&full_observation(&t), &init, &cfg, None).unwrap();
    assert!(rel(&out.estimate.reconstruct(), &t) <= 1e-10);
}

#[test]
fn zero_steps_or_zero_rate_return_the_init() {
    let f = truth(8, 2, 10.0, 6);
    let t = f.reconstruct();
    let obs = sample_observations(&t, 300, &NoiseModel::Gaussian { sigma: 1.0 }, 10).unwrap();
    let init = make_independent_init(&f, 0.5, 11).unwrap();
    let cfg = EstimatorConfig { rgd_steps: 0, ..EstimatorConfig::new(f.rank()) };
    assert_eq!(rgd_offline(&obs, &init, &cfg, None).unwrap().estimate, init);
    let cfg = EstimatorConfig { step_size: StepSize::Fixed(0.0), ..EstimatorConfig::new(f.rank()) };
    assert!(rel(&rgd_online(&obs, &init, &cfg, None).unwrap().estimate.reconstruct(), &init.reconstruct()) <= 1e-12);
}

#[test]
fn offline_rgd_converges_and_does_not_oscillate() {
    let d = 30;
    let f = truth(d, 2, 10.0 * (d as f64).powf(1.25), 21);
    let t = f.reconstruct();
    let obs = sample_observations(&t, 2700, &NoiseModel::Gaussian { sigma: 0.1 }, 22).unwrap();
    let init = diag_deletion_init(&obs, &f.rank()).unwrap();
    let out = rgd_offline(&obs, &init, &EstimatorConfig::new(f.rank()), Some(&t)).unwrap();
    let tr = out.trajectory.unwrap();
    let last = *tr.last().unwrap();
    assert!(last <= 0.01, "final {last}");
    for w in tr[3..].windows(2) {
        assert!(w[1] <= w[0] + 0.01 * last, "{tr:?}");
    }
}

#[test]
fn online_pass_improves_a_noisy_start() {
    let d = 20usize;
    let f = truth(d, 2, 10.0 * (d as f64).powf(1.25), 31);
    let t = f.reconstruct();
    let ln = (d as f64).ln();
    let n = (5.0 * (d as f64).powf(1.5) * ln * ln) as usize;
    let obs = sample_observations(&t, n, &NoiseModel::Gaussian { sigma: 0.1 }, 32).unwrap();
    let init = make_independent_init(&f, 0.3 * t.norms().linf, 33).unwrap();
    let out = rgd_online(&obs, &init, &EstimatorConfig::new(f.rank()), Some(&t)).unwrap();
    let tr = out.trajectory.unwrap();
    assert!(tr[1] < tr[0], "{tr:?}");
}

#[test]
fn independent_init_respects_its_target() {
    let f = truth(30, 2, 30f64.powf(1.25), 41);
    assert_eq!(make_independent_init(&f, 0.0, 1).unwrap(), f);
    let t = f.reconstruct();
    let target = 0.5;
    for seed in 0..100 {
        let init = make_independent_init(&f, target, seed).unwrap();
        let gap = init.reconstruct().sub(&t).unwrap().norms().linf;
        assert!(gap <= 5.0 * target, "seed {seed}: {gap}");
    }
}

#[test]
fn generated_truth_is_usually_incoherent() {
    let spec = |seed| GroundTruthSpec::new(Shape::new(vec![100, 100, 100]).unwrap(), MultilinearRank::uniform(3, 2).unwrap(), 1.0, seed);
    let mut above = 0;
    for seed in 0..1000 {
        let f = generate_ground_truth(&spec(seed)).unwrap();
        let mu = f.diagnostics().unwrap().mu();
        assert!(mu <= 25.0, "seed {seed}: {mu}");
        above += usize::from(mu > 10.0);
    }
    assert!(above <= 15, "{above} of 1000 above 10");
}

#[test]
fn generated_truth_has_requested_spectrum() {
    let f = truth(12, 3, 4.0, 51);
    let diag = f.diagnostics().unwrap();
    assert!((diag.lambda_min - 4.0).abs() <= 1e-9);
    assert!(diag.kappa <= 10.0 + 1e-9);
    for u in f.factors() {
        assert!(u.orthonormality_defect() <= 1e-12);
    }
}

fn random_point(d: usize, r: usize, seed: u64) -> TuckerFactorization {
    let mut g = rng(seed);
    let core = DenseTensor::new(Shape::new(vec![r, r, r]).unwrap(), gaussian_matrix(1, r * r * r, &mut g).into_data()).unwrap();
    let factors = (0..3)
        .map(|_| random_orthogonal(d, &mut g).unwrap().select_columns(&(0..r).collect::<Vec<_>>()))
        .collect();
    TuckerFactorization::new(core, factors).unwrap()
}

fn random_dense(d: usize, g: &mut StreamRng) -> DenseTensor {
    DenseTensor::new(cube(d), gaussian_matrix(1, d * d * d, g).into_data()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tangent_projection_is_an_orthogonal_projector(d in 3usize..=6, r in 1usize..=2, seed in any::<u64>(), a in -3.0f64..3.0) {
        let f = random_point(d, r, seed);
        let mut g = rng(seed ^ 1);
        let x = random_dense(d, &mut g);
        let y = random_dense(d, &mut g);
        let px = tangent_project_at(&f, &x).unwrap();
        let py = tangent_project_at(&f, &y).unwrap();
        let tol = 1e-10 * (1.0 + x.frobenius_norm() * y.frobenius_norm());

        let mut comb = x.clone();
        comb.axpy(a, &y).unwrap();
        let mut lin = px.clone();
        lin.axpy(a, &py).unwrap();
        prop_assert!(tangent_project_at(&f, &comb).unwrap().sub(&lin).unwrap().frobenius_norm() <= tol);

        prop_assert!(tangent_project_at(&f, &px).unwrap().sub(&px).unwrap().frobenius_norm() <= tol);
        prop_assert!((px.inner(&y).unwrap() - x.inner(&py).unwrap()).abs() <= tol);
        prop_assert!(px.frobenius_norm() <= x.frobenius_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn tangent_space_contains_the_base_point(d in 3usize..=6, r in 1usize..=2, seed in any::<u64>()) {
        let f = random_point(d, r, seed);
        let t = f.reconstruct();
        let p = tangent_project_at(&f, &t).unwrap();
        prop_assert!(p.sub(&t).unwrap().frobenius_norm() <= 1e-10 * t.frobenius_norm().max(1.0));
    }
}
