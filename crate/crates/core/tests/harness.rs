use std::path::PathBuf;

use lempc::harness::{
    bench_prediction, learn, run_stages, write_outputs, BoundMode, ExperimentConfig, SweepConfig, Stages,
};
use lempc::Error;
use serde_json::Value;

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// The numeric experiment shrunk to a few seconds of work.
fn small_numeric() -> ExperimentConfig {
    let mut c = ExperimentConfig::load(config_path("numeric.json")).unwrap();
    c.dataset.count = 60;
    c.dataset.test_count = 20;
    c.learning.residual_slack = 3.0;
    c.learning.gradient_samples = 200;
    c.lipschitz.samples_per_cluster = 200;
    c.bound = BoundMode::Deterministic {
        plant_lipschitz: 17.889,
        covering_samples: 200,
    };
    c.bench.as_mut().unwrap().queries = 20;
    c.output_dir = None;
    c
}

fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !k.contains("seconds"));
            map.values_mut().for_each(strip_timings);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

#[test]
fn bundled_configs_round_trip() {
    for name in ["numeric.json", "cstr.json"] {
        let c = ExperimentConfig::load(config_path(name)).unwrap();
        let text = c.to_json().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text, "{name}");
    }
}

#[test]
fn empty_dataset_is_rejected_before_compute() {
    let mut c = small_numeric();
    c.dataset.count = 0;
    assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))));
    assert!(matches!(run_stages(&c, Stages::All), Err(Error::InvalidArgument(_))));
}

#[test]
fn sweep_alpha_list_is_validated() {
    let mut c = ExperimentConfig::load(config_path("cstr.json")).unwrap();
    c.sweep = Some(SweepConfig {
        alphas: vec![],
        initial_state: vec![0.9, 0.82, 0.6],
        steps: 10,
        plant: None,
        disturbance: None,
    });
    assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))));
    c.sweep.as_mut().unwrap().alphas = vec![0.5, 0.0];
    assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))));
    c.sweep.as_mut().unwrap().alphas = vec![0.5, 1.0];
    c.validate().unwrap();
}

#[test]
fn controller_sections_need_the_reactor() {
    let mut c = small_numeric();
    let cstr = ExperimentConfig::load(config_path("cstr.json")).unwrap();
    c.controller = cstr.controller;
    assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))));
}

#[test]
fn bench_edge_cases() {
    let c = small_numeric();
    let plant = c.plant.build();
    let learned = learn(&c, plant.as_ref()).unwrap();
    let empty = bench_prediction(plant.as_ref(), &learned.predictor, &learned.predictor, 0, 3).unwrap();
    assert_eq!(empty.queries, 0);
    assert!(empty.errors.iter().all(|e| e.is_empty()));

    let same = bench_prediction(plant.as_ref(), &learned.predictor, &learned.predictor, 25, 3).unwrap();
    assert_eq!(same.errors.len(), 2);
    assert_eq!(same.errors[0].len(), 25);
    assert_eq!(same.errors[0], same.errors[1]);
}

#[test]
fn reports_are_reproducible_across_thread_counts() {
    let c = small_numeric();
    let run = || {
        let exp = run_stages(&c, Stages::All).unwrap();
        let mut v = serde_json::to_value(&exp.report).unwrap();
        strip_timings(&mut v);
        v
    };
    let parallel = run();
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    assert_eq!(parallel, serial);
    assert_eq!(parallel, run());
}

#[test]
fn small_run_passes_its_checks_and_writes_outputs() {
    let c = small_numeric();
    let exp = run_stages(&c, Stages::All).unwrap();
    let report = &exp.report;
    assert_eq!(report.seed, c.seed);
    assert!(report.hard_failures().is_empty(), "{:?}", report.hard_failures());
    for name in [
        "normalization_round_trip",
        "samples_within_domain",
        "fit_residual_band",
        "fit_gradient_cap",
        "posterior_lipschitz_finite",
        "bound_covers_test_errors",
    ] {
        let check = report.checks.iter().find(|k| k.name == name).unwrap();
        assert!(check.checked > 0, "{name}");
    }
    assert!(report.learning.r_square.is_finite());
    assert!(report.bound.mu_bar.unwrap() > 0.0);

    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &c, &exp).unwrap();
    for f in ["report.json", "config.json", "predictor.json", "bench.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let back = ExperimentConfig::load(dir.path().join("config.json")).unwrap();
    assert_eq!(back.to_json().unwrap(), c.to_json().unwrap());
}
