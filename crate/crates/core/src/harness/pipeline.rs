use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::checks;
use super::config::{BoundMode, ExperimentConfig, PlantConfig, SimulatedPlant};
use super::report::*;
use crate::controller::{ControllerConfig, EconomicCost, Lempc, LempcDesign, QuadraticCost};
use crate::error::{Error, Result};
use crate::error_analysis::{
    covering_radius, deterministic_bound, estimate_hit_probability, lipschitz_report, probabilistic_bound,
    JacobianScope,
};
use crate::plants::data::generate_dataset_tagged;
use crate::plants::{closed_loop_simulate, generate_dataset, r_square, Disturbance, Plant, PredictorPlant, Trajectory};
use crate::regression::{estimate_output_lipschitz, fit_cklr, CklrPredictor, Dataset, FitReport, KinkyInference, PointPredictor};
use crate::rng::{stream_rng, tags};
use crate::sets::BoxSet;

/// Output of the offline learning stage.
pub struct Learned {
    /// Normalized constraint box over `(x, u)`.
    pub domain: BoxSet,
    pub dataset: Dataset,
    pub test: Dataset,
    pub predictor: CklrPredictor,
    pub fit: FitReport,
    pub summary: LearningSummary,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Euclidean errors of `model` on a dataset.
pub fn prediction_errors(model: &dyn PointPredictor, data: &Dataset) -> Vec<f64> {
    let mut out = vec![0.0; model.output_dim()];
    data.inputs()
        .iter()
        .zip(data.outputs())
        .map(|(w, y)| {
            model.predict_point(w, &mut out);
            euclid(&out, y)
        })
        .collect()
}

/// Data generation, clustering, weight fits and the learning metrics.
pub fn learn(config: &ExperimentConfig, plant: &dyn Plant) -> Result<Learned> {
    config.validate()?;
    let dataset = generate_dataset(plant, config.dataset.count, config.seed)?;
    let test = generate_dataset_tagged(plant, config.dataset.test_count, config.seed, tags::TEST_SET)?;
    let domain = plant.normalization().normalize_box(plant.region());
    let start = Instant::now();
    let (predictor, fit) = fit_cklr(&dataset, &domain, &config.cklr()?)?;
    let fit_seconds = start.elapsed().as_secs_f64();

    let predicted: Vec<Vec<f64>> = test.inputs().iter().map(|w| predictor.predict(w)).collect::<Result<_>>()?;
    let r2 = r_square(&predicted, test.outputs())?;
    let errors = prediction_errors(&predictor, &test);
    let lipschitz = lipschitz_report(
        &predictor,
        &domain,
        config.lipschitz.samples_per_cluster,
        config.seed,
        config.lipschitz.inflation,
        JacobianScope::Full,
    )?;
    let mut out = vec![0.0; predictor.state_dim];
    let timings: Vec<f64> = test
        .inputs()
        .iter()
        .map(|w| {
            let t = Instant::now();
            predictor.predict_into(w, &mut out);
            t.elapsed().as_secs_f64()
        })
        .collect();
    let summary = LearningSummary {
        dataset_size: dataset.len(),
        test_size: test.len(),
        cluster_sizes: fit.cluster_sizes.clone(),
        prior_lipschitz: predictor.locals.iter().map(|l| l.prior_lipschitz.clone()).collect(),
        r_square: r2,
        test_errors: Quantiles::of(&errors),
        gap: lipschitz.gap,
        lipschitz,
        fit_seconds,
        max_solve_seconds: fit.max_solve_seconds,
        prediction_seconds: Quantiles::of(&timings),
    };
    Ok(Learned {
        domain,
        dataset,
        test,
        predictor,
        fit,
        summary,
    })
}

/// Error-bound selection. In admissible mode `μ̄` is left open until the
/// controller design fixes it.
pub fn bounds(config: &ExperimentConfig, plant: &dyn Plant, learned: &Learned) -> Result<BoundRecord> {
    let errors = prediction_errors(&learned.predictor, &learned.test);
    let test_max = errors.iter().copied().fold(0.0, f64::max);
    let mut record = BoundRecord {
        mode: String::new(),
        mu_bar: None,
        deterministic: None,
        probabilistic: None,
        hit_probability_estimate: None,
        covering_radius: None,
        test_max_error: test_max,
        test_points_above_bound: None,
    };
    match &config.bound {
        BoundMode::Deterministic {
            plant_lipschitz,
            covering_samples,
        } => {
            let domain = &learned.domain;
            let pred = &learned.predictor;
            let radii = (0..pred.k())
                .into_par_iter()
                .map(|j| covering_radius(pred, j, domain, *covering_samples, config.seed))
                .collect::<Result<Vec<f64>>>()?;
            let noise = match &config.plant {
                PlantConfig::Numeric { noise_bound } => *noise_bound,
                PlantConfig::Cstr { params, disturbance_bound, .. } => {
                    let scale = &plant.normalization().scale[..plant.state_dim()];
                    scale
                        .iter()
                        .map(|s| (params.sample_time * disturbance_bound / s).powi(2))
                        .sum::<f64>()
                        .sqrt()
                }
            };
            let worst = (0..pred.k())
                .map(|j| {
                    deterministic_bound(
                        radii[j],
                        *plant_lipschitz,
                        learned.summary.lipschitz.per_cluster[j],
                        noise,
                        config.learning.residual_slack,
                    )
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .max_by(|a, b| a.mu_bar.total_cmp(&b.mu_bar))
                .expect("at least one cluster");
            record.mode = "deterministic".into();
            record.mu_bar = Some(worst.mu_bar);
            record.deterministic = Some(worst);
            record.covering_radius = Some(radii);
        }
        BoundMode::Probabilistic { margin } => {
            let p_hat = estimate_hit_probability(&errors, test_max, *margin);
            let b = probabilistic_bound(&errors, *margin, p_hat)?;
            record.mode = "probabilistic".into();
            record.mu_bar = Some(b.mu_bar);
            record.hit_probability_estimate = Some(p_hat);
            record.probabilistic = Some(b);
        }
        BoundMode::Admissible { .. } => {
            record.mode = "admissible".into();
        }
    }
    if let Some(mu) = record.mu_bar {
        record.test_points_above_bound = Some(errors.iter().filter(|e| **e > mu).count());
    }
    Ok(record)
}

/// Economic stage cost of the configured plant, if it has one.
pub fn economic_cost(config: &ExperimentConfig, plant: &dyn Plant) -> Option<QuadraticCost> {
    match &config.plant {
        PlantConfig::Cstr { cost_offset, .. } => Some(QuadraticCost::cstr(plant.normalization(), *cost_offset)),
        PlantConfig::Numeric { .. } => None,
    }
}

/// Attempts at shrinking `μ̄` in admissible mode before giving up.
const ADMISSIBLE_ATTEMPTS: usize = 30;

/// Controller design on the learned predictor. Fills in `μ̄` in
/// admissible mode.
pub fn design_controller<'a>(
    config: &ExperimentConfig,
    plant: &dyn Plant,
    learned: &'a Learned,
    cost: &'a dyn EconomicCost,
    bound: &mut BoundRecord,
) -> Result<(Lempc<'a>, ControllerSummary)> {
    let cc: &ControllerConfig = config
        .controller
        .as_ref()
        .ok_or_else(|| Error::invalid("config has no controller section"))?;
    let start = Instant::now();
    let domain = learned.domain.clone();
    let state_l = lipschitz_report(
        &learned.predictor,
        &domain,
        config.lipschitz.samples_per_cluster,
        config.seed,
        config.lipschitz.inflation,
        JacobianScope::State,
    )
    .map_err(|e| e.in_stage("state Lipschitz"))?;
    let l = state_l.global;
    let model = &learned.predictor;

    let controller = match (&config.bound, bound.mu_bar) {
        (BoundMode::Admissible { fraction }, _) => {
            let nominal = Lempc::design(model, cost, &domain, l, 0.0, cc)?;
            let steady = nominal.design.steady.clone();
            let mut mu = fraction * nominal.design.terminal.admissible_mu_bar;
            let mut attempt = 0;
            loop {
                match Lempc::with_steady_state(model, cost, &domain, l, mu, cc, steady.clone()) {
                    Ok(c) => break c,
                    Err(e) if matches!(e.root(), Error::BoundTooLarge(_)) && attempt < ADMISSIBLE_ATTEMPTS => {
                        attempt += 1;
                        mu *= fraction;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        (_, Some(mu)) => Lempc::design(model, cost, &domain, l, mu, cc)?,
        (_, None) => return Err(Error::State("error bound has not been selected".into())),
    };
    let mu = controller.design.mu_bar;
    bound.mu_bar = Some(mu);
    let errors = prediction_errors(&learned.predictor, &learned.test);
    bound.test_points_above_bound = Some(errors.iter().filter(|e| **e > mu).count());

    let d: &LempcDesign = &controller.design;
    let norm = plant.normalization();
    let mut w = d.steady.x.clone();
    w.extend_from_slice(&d.steady.u);
    let raw = norm.denormalize(&w);
    let n = d.steady.x.len();
    let summary = ControllerSummary {
        lipschitz: state_l,
        mu_bar: mu,
        steady: d.steady.clone(),
        steady_x_raw: raw[..n].to_vec(),
        steady_u_raw: raw[n..].to_vec(),
        terminal: d.terminal.clone(),
        chi: d.chi,
        pi0: d.pi0,
        margins: d.margins.clone(),
        design_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((controller, summary))
}

/// Closed-loop run against the configured plant. A failure at the first
/// step is returned as `Err`.
pub fn simulate_one(
    plant: &dyn Plant,
    which: SimulatedPlant,
    controller: &Lempc,
    x0: &[f64],
    steps: usize,
    disturbance: &Disturbance,
) -> Result<Trajectory> {
    match which {
        SimulatedPlant::True => closed_loop_simulate(plant, controller, x0, steps, disturbance),
        SimulatedPlant::Predictor => {
            let n = controller.model.state_dim();
            let per_coordinate = controller.design.mu_bar / (n as f64).sqrt();
            let region = plant.normalization().normalize_box(plant.region());
            let nominal = PredictorPlant::new(controller.model, region, vec![per_coordinate; n]);
            closed_loop_simulate(&nominal, controller, x0, steps, disturbance)
        }
    }
}

pub fn run_record(x0: &[f64], result: &Result<Trajectory>) -> RunRecord {
    match result {
        Ok(t) => RunRecord {
            initial_state: x0.to_vec(),
            summary: Some(t.summary()),
            error: None,
            stabilizing_seconds: Quantiles::of(&t.logs.iter().map(|l| l.stabilizing_seconds).collect::<Vec<_>>()),
            economic_seconds: Quantiles::of(&t.logs.iter().map(|l| l.economic_seconds).collect::<Vec<_>>()),
        },
        Err(e) => RunRecord {
            initial_state: x0.to_vec(),
            summary: None,
            error: Some(e.to_string()),
            stabilizing_seconds: Quantiles::of(&[]),
            economic_seconds: Quantiles::of(&[]),
        },
    }
}

/// Runs every configured initial state concurrently; results keep the
/// configured order.
pub fn simulate_all(config: &ExperimentConfig, plant: &dyn Plant, controller: &Lempc) -> Vec<Result<Trajectory>> {
    let Some(sim) = &config.simulation else {
        return Vec::new();
    };
    sim.initial_states
        .par_iter()
        .map(|x0| simulate_one(plant, sim.plant, controller, x0, sim.steps, &sim.disturbance))
        .collect()
}

/// The same controller with a different contraction weight.
pub fn with_alpha<'a>(controller: &Lempc<'a>, alpha: f64) -> Lempc<'a> {
    let mut design = controller.design.clone();
    design.alpha = alpha;
    Lempc {
        model: controller.model,
        economic: controller.economic,
        design,
        options: controller.options.clone(),
    }
}

/// Closed loop per `α` from a shared design: average economic cost and
/// terminal-set entry time.
pub fn sweep_alpha(
    config: &ExperimentConfig,
    plant: &dyn Plant,
    controller: &Lempc,
    alphas: &[f64],
) -> Result<(Vec<SweepRow>, Vec<Result<Trajectory>>)> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::invalid("config has no sweep section"))?;
    if alphas.is_empty() {
        return Err(Error::invalid("α list is empty"));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return Err(Error::invalid("α values must lie in (0, 1]"));
    }
    let (which, disturbance) = match &config.simulation {
        Some(s) => (s.plant, s.disturbance.clone()),
        None => (SimulatedPlant::True, Disturbance::Zero),
    };
    let which = sweep.plant.unwrap_or(which);
    let disturbance = sweep.disturbance.clone().unwrap_or(disturbance);
    let runs: Vec<Result<Trajectory>> = alphas
        .par_iter()
        .map(|a| {
            let c = with_alpha(controller, *a);
            simulate_one(plant, which, &c, &sweep.initial_state, sweep.steps, &disturbance)
        })
        .collect();
    let rows = alphas
        .iter()
        .zip(&runs)
        .map(|(a, r)| match r {
            Ok(t) => {
                let s = t.summary();
                SweepRow {
                    alpha: *a,
                    average_cost: s.average_cost,
                    terminal_entry: s.terminal_entry,
                    feasible_steps: s.feasible_steps,
                    steps: s.steps,
                    pi_equals_va_star: t.logs.iter().skip(1).all(|l| l.pi == l.va_star),
                    failure: s.failure,
                }
            }
            Err(e) => SweepRow {
                alpha: *a,
                average_cost: None,
                terminal_entry: None,
                feasible_steps: 0,
                steps: 0,
                pi_equals_va_star: false,
                failure: Some(e.to_string()),
            },
        })
        .collect();
    Ok((rows, runs))
}

/// Repetitions per query when timing a prediction.
const TIMING_REPEATS: usize = 16;

/// Per-query wall time and absolute error of two predictors on `n_queries`
/// fresh noise-free points of `plant`.
pub fn bench_prediction(
    plant: &dyn Plant,
    predictor: &dyn PointPredictor,
    baseline: &dyn PointPredictor,
    n_queries: usize,
    seed: u64,
) -> Result<BenchTable> {
    let n = plant.state_dim();
    let norm = plant.normalization();
    let zero = vec![0.0; n];
    let mut queries = Vec::with_capacity(n_queries);
    for i in 0..n_queries {
        let mut rng = stream_rng(seed, tags::BENCH, i as u64);
        let raw = plant.region().sample(&mut rng);
        let y = plant.step(&raw[..n], &raw[n..], &zero)?;
        queries.push((norm.normalize(&raw), norm.normalize_leading(&y)));
    }
    let mut rows = Vec::new();
    let mut all_errors = Vec::new();
    for (name, model) in [("cklr", predictor), ("ki", baseline)] {
        let mut out = vec![0.0; model.output_dim()];
        let mut errors = Vec::with_capacity(n_queries);
        let mut seconds = Vec::with_capacity(n_queries);
        for (w, y) in &queries {
            let t = Instant::now();
            for _ in 0..TIMING_REPEATS {
                model.predict_point(std::hint::black_box(w), &mut out);
            }
            seconds.push(t.elapsed().as_secs_f64() / TIMING_REPEATS as f64);
            let err = out.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            errors.push(err);
        }
        rows.push(BenchRow {
            model: name.into(),
            abs_errors: Quantiles::of(&errors),
            query_seconds: Quantiles::of(&seconds),
        });
        all_errors.push(errors);
    }
    Ok(BenchTable {
        queries: n_queries,
        seed,
        rows,
        errors: all_errors,
    })
}

/// The kinky-inference baseline on the learning data, using the largest
/// componentwise pairwise Lipschitz estimate.
pub fn ki_baseline(config: &ExperimentConfig, learned: &Learned, lambda: f64) -> Result<KinkyInference> {
    let d = &learned.dataset;
    let l = (0..d.state_dim())
        .map(|k| estimate_output_lipschitz(d.inputs(), d.outputs(), k, config.learning.lambda))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    KinkyInference::new(d, l, lambda)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Everything `run_experiment` produced, including the trajectories.
pub struct Experiment {
    pub report: ExperimentReport,
    pub predictor: CklrPredictor,
    pub trajectories: Vec<Option<Trajectory>>,
    pub sweep_trajectories: Vec<Option<Trajectory>>,
}

/// Which stages to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stages {
    Learn,
    Bounds,
    Control,
    Simulate,
    Bench,
    Sweep,
    All,
}

impl Stages {
    fn includes(self, other: Stages) -> bool {
        use Stages::*;
        match self {
            All => true,
            Learn => other == Learn,
            Bounds => matches!(other, Learn | Bounds),
            Control => matches!(other, Learn | Bounds | Control),
            Simulate => matches!(other, Learn | Bounds | Control | Simulate),
            Sweep => matches!(other, Learn | Bounds | Control | Sweep),
            Bench => matches!(other, Learn | Bench),
        }
    }
}

/// Full pipeline: learning, error analysis, controller design, closed-loop
/// runs, sweep and benchmark, followed by the invariant suite.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let exp = run_stages(config, Stages::All)?;
    if let Some(dir) = &config.output_dir {
        write_outputs(dir, config, &exp)?;
    }
    Ok(exp.report)
}

pub fn run_stages(config: &ExperimentConfig, stages: Stages) -> Result<Experiment> {
    config.validate()?;
    let plant = config.plant.build();
    let plant: &dyn Plant = plant.as_ref();
    let learned = learn(config, plant).map_err(|e| e.in_stage("learning"))?;
    let mut bound = if stages.includes(Stages::Bounds) {
        bounds(config, plant, &learned).map_err(|e| e.in_stage("error bound"))?
    } else {
        BoundRecord {
            mode: "none".into(),
            mu_bar: None,
            deterministic: None,
            probabilistic: None,
            hit_probability_estimate: None,
            covering_radius: None,
            test_max_error: learned.summary.test_errors.max,
            test_points_above_bound: None,
        }
    };
    let mut checks = checks::learning_checks(config, plant, &learned);
    checks.extend(checks::bound_checks(&learned, &bound));

    let cost = economic_cost(config, plant);
    let mut controller_summary = None;
    let mut runs = Vec::new();
    let mut trajectories = Vec::new();
    let mut sweep_rows = None;
    let mut sweep_trajectories = Vec::new();
    if let (Some(cost), true) = (&cost, stages.includes(Stages::Control) && config.controller.is_some()) {
        let (controller, summary) = design_controller(config, plant, &learned, cost, &mut bound)
            .map_err(|e| e.in_stage("controller design"))?;
        checks.extend(checks::design_checks(&controller, &bound));
        controller_summary = Some(summary);
        if stages.includes(Stages::Simulate) {
            let results = simulate_all(config, plant, &controller);
            if let Some(sim) = &config.simulation {
                for (x0, r) in sim.initial_states.iter().zip(&results) {
                    runs.push(run_record(x0, r));
                }
            }
            checks.extend(checks::closed_loop_checks(plant, &controller, &results));
            trajectories = results.into_iter().map(|r| r.ok()).collect();
        }
        if let (Some(sweep), true) = (&config.sweep, stages.includes(Stages::Sweep)) {
            let (rows, results) = sweep_alpha(config, plant, &controller, &sweep.alphas).map_err(|e| e.in_stage("α sweep"))?;
            checks.extend(checks::sweep_checks(&rows));
            sweep_rows = Some(rows);
            sweep_trajectories = results.into_iter().map(|r| r.ok()).collect();
        }
        if stages.includes(Stages::Simulate) {
            checks.push(checks::fhocp_gradient_check(config, &controller));
        }
    }

    let bench = match (&config.bench, stages.includes(Stages::Bench)) {
        (Some(b), true) => {
            let ki = ki_baseline(config, &learned, b.ki_lambda).map_err(|e| e.in_stage("benchmark"))?;
            let table = bench_prediction(
                plant,
                &learned.predictor,
                &ki,
                b.queries,
                crate::rng::derive_seed(config.seed, tags::BENCH, 0),
            )
            .map_err(|e| e.in_stage("benchmark"))?;
            checks.push(checks::bench_check(&table));
            Some(table)
        }
        _ => None,
    };

    let report = ExperimentReport {
        name: config.name.clone(),
        seed: config.seed,
        plant: config.plant.name().into(),
        learning: learned.summary.clone(),
        bound,
        controller: controller_summary,
        runs,
        sweep: sweep_rows,
        bench,
        checks,
    };
    Ok(Experiment {
        report,
        predictor: learned.predictor,
        trajectories,
        sweep_trajectories,
    })
}

/// Report JSON, resolved config, predictor, trajectory CSVs and the
/// timing/sweep/bench tables.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, exp: &Experiment) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), &exp.report)?;
    write_json(&dir.join("config.json"), config)?;
    exp.predictor.save(dir.join("predictor.json"))?;
    for (i, t) in exp.trajectories.iter().enumerate() {
        if let Some(t) = t {
            t.write_csv(std::fs::File::create(dir.join(format!("run_{i}.csv")))?)?;
            crate::controller::write_step_log_csv(&t.logs, std::fs::File::create(dir.join(format!("run_{i}_steps.csv")))?)?;
        }
    }
    for (i, t) in exp.sweep_trajectories.iter().enumerate() {
        if let Some(t) = t {
            t.write_csv(std::fs::File::create(dir.join(format!("sweep_{i}.csv")))?)?;
        }
    }
    if let Some(rows) = &exp.report.sweep {
        let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
        w.write_record(["alpha", "average_cost", "terminal_entry", "feasible_steps", "pi_equals_va_star"])?;
        for r in rows {
            w.write_record([
                r.alpha.to_string(),
                r.average_cost.map(|c| c.to_string()).unwrap_or_default(),
                r.terminal_entry.map(|k| k.to_string()).unwrap_or_default(),
                r.feasible_steps.to_string(),
                r.pi_equals_va_star.to_string(),
            ])?;
        }
        w.flush()?;
    }
    if let Some(b) = &exp.report.bench {
        let mut w = csv::Writer::from_path(dir.join("bench.csv"))?;
        w.write_record(["query", "model", "abs_error"])?;
        for (row, errs) in b.rows.iter().zip(&b.errors) {
            for (i, e) in errs.iter().enumerate() {
                w.write_record([i.to_string(), row.model.clone(), e.to_string()])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}
