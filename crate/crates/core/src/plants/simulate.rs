use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Normalization, Plant};
use crate::controller::{Lempc, Model, StepLog};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, tags};
use crate::sets::BoxSet;

/// Source of the additive disturbance applied at each plant step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disturbance {
    Zero,
    /// Uniform on `[-δ̄, δ̄]` per coordinate.
    Uniform { seed: u64 },
    /// Uniform draws scaled by `rate^k`.
    Decaying { seed: u64, rate: f64 },
    /// Explicit per-step values; must respect the plant bound.
    Sequence { values: Vec<Vec<f64>> },
}

impl Disturbance {
    fn sample(&self, k: usize, bound: &[f64]) -> Result<Vec<f64>> {
        let uniform = |seed: u64, scale: f64| {
            let mut rng = stream_rng(seed, tags::DISTURBANCE, k as u64);
            bound
                .iter()
                .map(|b| if *b > 0.0 { scale * rng.random_range(-*b..=*b) } else { 0.0 })
                .collect::<Vec<f64>>()
        };
        match self {
            Disturbance::Zero => Ok(vec![0.0; bound.len()]),
            Disturbance::Uniform { seed } => Ok(uniform(*seed, 1.0)),
            Disturbance::Decaying { seed, rate } => Ok(uniform(*seed, rate.powi(k as i32))),
            Disturbance::Sequence { values } => {
                let v = values
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| vec![0.0; bound.len()]);
                if v.len() != bound.len() || v.iter().zip(bound).any(|(d, b)| d.abs() > *b) {
                    return Err(Error::invalid(format!("disturbance at step {k} exceeds the declared bound")));
                }
                Ok(v)
            }
        }
    }
}

/// A prediction model used as the plant, with an additive disturbance in
/// normalized units.
pub struct PredictorPlant<'a> {
    model: &'a dyn Model,
    region: BoxSet,
    bound: Vec<f64>,
    normalization: Normalization,
}

impl<'a> PredictorPlant<'a> {
    pub fn new(model: &'a dyn Model, region: BoxSet, bound: Vec<f64>) -> Self {
        let dim = region.dim();
        Self {
            model,
            region,
            bound,
            normalization: Normalization::identity(dim),
        }
    }
}

impl Plant for PredictorPlant<'_> {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn region(&self) -> &BoxSet {
        &self.region
    }

    fn disturbance_bound(&self) -> &[f64] {
        &self.bound
    }

    fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    fn step(&self, x: &[f64], u: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
        let next = self.model.step(x, u);
        Ok(next.iter().zip(delta).map(|(a, b)| a + b).collect())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    /// Normalized states `x_0 … x_T`.
    pub states: Vec<Vec<f64>>,
    pub states_raw: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub inputs_raw: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    /// `L_e(x_k, u_k)` as reported by the controller's economic cost.
    pub stage_costs: Vec<f64>,
    /// `‖x_{k+1} - f̂(x_k, u_k)‖` in normalized units.
    pub model_errors: Vec<f64>,
    /// One flag per attempted step; `false` marks the step that failed.
    pub feasible: Vec<bool>,
    /// One flag per recorded state: outside the constraint box.
    pub constraint_violated: Vec<bool>,
    pub logs: Vec<StepLog>,
    pub failure: Option<String>,
    /// First `k` with `E_a(x_k) ≤ α_N`.
    pub terminal_entry: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub steps: usize,
    pub feasible_steps: usize,
    pub failure: Option<String>,
    pub terminal_entry: Option<usize>,
    pub average_cost: Option<f64>,
    pub constraint_violations: usize,
    pub candidate_failures: usize,
    pub max_model_error: f64,
    pub solve_seconds_median: f64,
    pub solve_seconds_p90: f64,
    pub solve_seconds_max: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

impl Trajectory {
    pub fn summary(&self) -> TrajectorySummary {
        let mut times: Vec<f64> = self.logs.iter().map(|l| l.total_seconds).collect();
        times.sort_by(f64::total_cmp);
        TrajectorySummary {
            steps: self.feasible.len(),
            feasible_steps: self.feasible.iter().filter(|f| **f).count(),
            failure: self.failure.clone(),
            terminal_entry: self.terminal_entry,
            average_cost: super::avg_economic_cost(&self.stage_costs, None).ok(),
            constraint_violations: self.constraint_violated.iter().filter(|v| **v).count(),
            candidate_failures: self
                .logs
                .iter()
                .filter(|l| l.candidate_feasible == Some(false))
                .count(),
            max_model_error: self.model_errors.iter().copied().fold(0.0, f64::max),
            solve_seconds_median: quantile(&times, 0.5),
            solve_seconds_p90: quantile(&times, 0.9),
            solve_seconds_max: times.last().copied().unwrap_or(f64::NAN),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.states.first().map_or(0, |s| s.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=n).map(|i| format!("x_raw_{i}")));
        header.extend((1..=m).map(|i| format!("u_{i}")));
        header.extend((1..=m).map(|i| format!("u_raw_{i}")));
        header.extend((1..=n).map(|i| format!("delta_{i}")));
        for h in ["stage_cost", "model_error", "va_e", "pi", "terminal_level", "feasible", "solve_seconds"] {
            header.push(h.into());
        }
        w.write_record(&header)?;
        for (k, log) in self.logs.iter().enumerate() {
            let mut row = vec![k.to_string()];
            let f = |v: &f64| format!("{v:e}");
            row.extend(self.states[k].iter().map(f));
            row.extend(self.states_raw[k].iter().map(f));
            row.extend(self.inputs[k].iter().map(f));
            row.extend(self.inputs_raw[k].iter().map(f));
            match self.disturbances.get(k) {
                Some(d) => row.extend(d.iter().map(f)),
                None => row.extend((0..n).map(|_| String::new())),
            }
            row.push(f(&self.stage_costs[k]));
            row.push(self.model_errors.get(k).map(f).unwrap_or_default());
            for v in [log.va_e, log.pi, log.terminal_level] {
                row.push(f(&v));
            }
            row.push(self.feasible[k].to_string());
            row.push(f(&log.total_seconds));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the controller against `plant` for `steps` ticks from the
/// normalized initial state `x0`. A failure at step 0 is returned as an
/// error; later failures are recorded and end the run.
pub fn closed_loop_simulate<P: Plant + ?Sized>(
    plant: &P,
    controller: &Lempc,
    x0: &[f64],
    steps: usize,
    disturbance: &Disturbance,
) -> Result<Trajectory> {
    let n = plant.state_dim();
    let m = plant.input_dim();
    if x0.len() != n {
        return Err(Error::invalid("initial state has the wrong dimension"));
    }
    let norm = plant.normalization();
    let region = norm.normalize_box(plant.region());
    let mut traj = Trajectory::default();
    let mut state = controller.initial_state();
    let mut x = x0.to_vec();
    let alpha_n = controller.design.terminal.alpha_n;

    let record_state = |traj: &mut Trajectory, x: &[f64]| {
        traj.states.push(x.to_vec());
        traj.states_raw.push(norm.denormalize_leading(x));
        let outside = (0..n).any(|c| x[c] < region.lower[c] - 1e-12 || x[c] > region.upper[c] + 1e-12);
        traj.constraint_violated.push(outside);
    };
    record_state(&mut traj, &x);
    if controller.design.terminal.level(&x) <= alpha_n {
        traj.terminal_entry = Some(0);
    }

    for k in 0..steps {
        let log = match controller.step(&mut state, &x) {
            Ok(log) => log,
            Err(e) if k == 0 => return Err(e.in_stage("closed loop (initial step)")),
            Err(e) => {
                traj.feasible.push(false);
                traj.failure = Some(e.to_string());
                log::warn!("closed loop halted: {e}");
                break;
            }
        };
        traj.feasible.push(true);
        let u = log.u.clone();
        let mut w = x.clone();
        w.extend_from_slice(&u);
        let u_raw: Vec<f64> = norm.denormalize(&w)[n..n + m].to_vec();
        let delta = disturbance.sample(k, plant.disturbance_bound())?;
        let next_raw = plant.step(&norm.denormalize_leading(&x), &u_raw, &delta)?;
        let next = norm.normalize_leading(&next_raw);
        let predicted = controller.model.step(&x, &u);
        traj.model_errors.push(
            next.iter()
                .zip(&predicted)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt(),
        );
        traj.stage_costs.push(controller.economic.eval(&x, &u));
        traj.inputs.push(u);
        traj.inputs_raw.push(u_raw);
        traj.disturbances.push(delta);
        traj.logs.push(log);
        x = next;
        record_state(&mut traj, &x);
        if traj.terminal_entry.is_none() && controller.design.terminal.level(&x) <= alpha_n {
            traj.terminal_entry = Some(k + 1);
        }
    }
    Ok(traj)
}
