use proptest::prelude::*;
use serde_json::{json, Value};

use tensor_inference::harness::{
    classify_regime, ks_distance, run_experiment, ExperimentConfig, ExperimentReport, Region, RunOptions,
};
use tensor_inference::{Error, Shape};

fn config(v: Value) -> ExperimentConfig {
    ExperimentConfig::from_value(&v).unwrap()
}

fn clt(sigma: f64, trials: usize) -> Value {
    json!({
        "schema_version": "1.0",
        "experiment": "clt",
        "shape": [8, 8, 8],
        "rank": [2, 2, 2],
        "gamma": 1.0,
        "noise": {"kind": "gaussian", "sigma": sigma},
        "sampling": {"n": 300},
        "init": {"mode": "independent"},
        "forms": {"kind": "cells", "cells": [[1, 1, 1]]},
        "trials": trials,
        "seed": 5
    })
}

fn coverage(sigma: f64) -> Value {
    json!({
        "schema_version": "1.0",
        "experiment": "coverage",
        "shape": [8, 8, 8],
        "rank": [2, 2, 2],
        "gamma": 1.0,
        "noise": {"kind": "gaussian", "sigma": sigma},
        "sampling": {"p": 0.5},
        "init": {"mode": "dependent", "rgd_steps": 10},
        "forms": {"kind": "coverage_family", "count": 12},
        "trials": 6,
        "seed": 11,
        "alphas": [0.05, 0.1, 0.3]
    })
}

fn without_clock(mut r: ExperimentReport) -> ExperimentReport {
    r.wall_clock_secs = 0.0;
    r
}

#[test]
fn zero_noise_with_exact_init_is_flagged_degenerate() {
    let report = run_experiment(&config(clt(0.0, 1)), RunOptions::default()).unwrap();
    let clt = report.clt.unwrap();
    assert!(report.failures.is_empty());
    assert!(clt.statistics.is_empty());
    assert_eq!(clt.degenerate_trials.len() + clt.statistics.len(), 1);
    assert_eq!(clt.ks, None);
}

#[test]
fn zero_noise_coverage_is_complete() {
    let mut v = coverage(0.0);
    v["init"] = json!({"mode": "independent"});
    let report = run_experiment(&config(v), RunOptions::default()).unwrap();
    for level in report.coverage.unwrap().levels {
        assert_eq!(level.mean, 1.0, "alpha {}", level.alpha);
    }
}

#[test]
fn coverage_nests_across_levels() {
    let report = run_experiment(&config(coverage(1.0)), RunOptions::default()).unwrap();
    let cov = report.coverage.unwrap();
    for trial in 0..6 {
        let at = |a: f64| cov.trials.iter().find(|t| t.trial == trial && t.alpha == a).unwrap().avgcov;
        assert!(at(0.05) >= at(0.1) && at(0.1) >= at(0.3), "trial {trial}");
    }
    for l in &cov.levels {
        assert!((l.mc_se - l.sd / 6f64.sqrt()).abs() <= 1e-12);
        assert!((l.nominal - (1.0 - l.alpha)).abs() <= 1e-12);
    }
}

#[test]
fn reports_repeat_except_for_the_clock() {
    let cfg = config(clt(1.0, 8));
    let a = without_clock(run_experiment(&cfg, RunOptions { threads: Some(1) }).unwrap());
    let b = without_clock(run_experiment(&cfg, RunOptions { threads: Some(3) }).unwrap());
    assert_eq!(a.to_json_pretty(), b.to_json_pretty());
    assert_eq!(a.samples_csv(), b.samples_csv());
    assert!(a.samples_csv().starts_with("trial,statistic\n"));
}

#[test]
fn seed_changes_the_draws() {
    let mut v = clt(1.0, 4);
    let a = run_experiment(&config(v.clone()), RunOptions::default()).unwrap();
    v["seed"] = json!(6);
    let b = run_experiment(&config(v), RunOptions::default()).unwrap();
    assert_ne!(a.samples_csv(), b.samples_csv());
}

#[test]
fn schema_errors_are_collected() {
    let mut v = clt(1.0, 0);
    v["gamma"] = json!("high");
    v["bogus"] = json!(1);
    v["noise"]["extra"] = json!(true);
    match ExperimentConfig::from_value(&v) {
        Err(Error::Schema(errs)) => {
            let joined = errs.join("\n");
            for key in ["trials", "gamma", "bogus", "extra"] {
                assert!(joined.contains(key), "{key} missing from {joined}");
            }
        }
        other => panic!("{other:?}"),
    }
    let mut v = clt(1.0, 1);
    v["schema_version"] = json!("2.0");
    assert!(matches!(ExperimentConfig::from_value(&v), Err(Error::Schema(_))));
}

#[test]
fn config_round_trips_through_json() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut all = vec![config(coverage(1.0)), config(clt(1.0, 3))];
    for entry in std::fs::read_dir(dir).unwrap() {
        all.push(ExperimentConfig::from_json(&std::fs::read_to_string(entry.unwrap().path()).unwrap()).unwrap());
    }
    for cfg in all {
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json_pretty()).unwrap(), cfg);
    }
}

#[test]
fn ks_distance_of_a_quantile_grid_is_small() {
    let n = 1000;
    let grid: Vec<f64> = (0..n).map(|k| tensor_inference::normal::quantile((k as f64 + 0.5) / n as f64)).collect();
    assert!(ks_distance(&grid) <= 0.5 / n as f64 + 1e-9);
    assert!(ks_distance(&vec![10.0; 5]) >= 0.99);
}

#[test]
fn order_two_regimes_are_binary() {
    let s = Shape::new(vec![50, 50]).unwrap();
    assert_eq!(classify_regime(0.01, 10, &s).region, Region::A);
    assert_eq!(classify_regime(1e6, 2000, &s).region, Region::E);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn regime_never_gets_worse_with_more_signal_or_data(
        dims in prop::collection::vec(5usize..=60, 2..=4),
        snr in 1e-3f64..1e3,
        factor in 1.0f64..100.0,
        n in 1usize..100_000,
    ) {
        let s = Shape::new(dims).unwrap();
        let base = classify_regime(snr, n, &s).region_index;
        prop_assert!(classify_regime(snr * factor, n, &s).region_index >= base);
        prop_assert!(classify_regime(snr, n * factor as usize, &s).region_index >= base);
    }
}
