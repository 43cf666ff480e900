use serde::{Deserialize, Serialize};

use crate::controller::{SteadyState, TerminalIngredients};
use crate::error_analysis::{ErrorBound, LipschitzReport};
use crate::plants::TrajectorySummary;

/// Order statistics of a sample; all fields are `NaN` when it is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            if v.is_empty() {
                f64::NAN
            } else {
                v[((v.len() - 1) as f64 * q).round() as usize]
            }
        };
        Self {
            count: v.len(),
            min: at(0.0),
            median: at(0.5),
            p90: at(0.9),
            max: at(1.0),
            mean: if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearningSummary {
    pub dataset_size: usize,
    pub test_size: usize,
    pub cluster_sizes: Vec<usize>,
    /// `L̄` per cluster and output.
    pub prior_lipschitz: Vec<Vec<f64>>,
    pub r_square: f64,
    /// Euclidean prediction error on the test set, normalized units.
    pub test_errors: Quantiles,
    /// Posterior constants of the full Jacobian `∂f̂/∂w`.
    pub lipschitz: LipschitzReport,
    pub gap: f64,
    pub fit_seconds: f64,
    pub max_solve_seconds: f64,
    pub prediction_seconds: Quantiles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRecord {
    pub mode: String,
    /// Bound handed to the controller; absent until it is known.
    pub mu_bar: Option<f64>,
    pub deterministic: Option<ErrorBound>,
    pub probabilistic: Option<ErrorBound>,
    /// Empirical `p̂` for the probabilistic bound (an estimate, not certified).
    pub hit_probability_estimate: Option<f64>,
    pub covering_radius: Option<Vec<f64>>,
    pub test_max_error: f64,
    /// Test points whose error exceeds `μ̄`.
    pub test_points_above_bound: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerSummary {
    /// Posterior constants of `∂f̂/∂x`, which drive the tightening.
    pub lipschitz: LipschitzReport,
    pub mu_bar: f64,
    pub steady: SteadyState,
    pub steady_x_raw: Vec<f64>,
    pub steady_u_raw: Vec<f64>,
    pub terminal: TerminalIngredients,
    pub chi: f64,
    pub pi0: f64,
    pub margins: Vec<f64>,
    pub design_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub initial_state: Vec<f64>,
    pub summary: Option<TrajectorySummary>,
    /// Set when the first step already failed.
    pub error: Option<String>,
    pub stabilizing_seconds: Quantiles,
    pub economic_seconds: Quantiles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub average_cost: Option<f64>,
    pub terminal_entry: Option<usize>,
    pub feasible_steps: usize,
    pub steps: usize,
    /// `Π = V_a*` at every step after the first.
    pub pi_equals_va_star: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: String,
    pub abs_errors: Quantiles,
    pub query_seconds: Quantiles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchTable {
    pub queries: usize,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
    /// Per-query absolute errors in row order.
    pub errors: Vec<Vec<f64>>,
}

/// One executed invariant check. Hard checks decide the exit status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub hard: bool,
    pub checked: usize,
    pub failed: usize,
    pub detail: String,
}

impl InvariantCheck {
    pub fn passed(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub plant: String,
    pub learning: LearningSummary,
    pub bound: BoundRecord,
    pub controller: Option<ControllerSummary>,
    pub runs: Vec<RunRecord>,
    pub sweep: Option<Vec<SweepRow>>,
    pub bench: Option<BenchTable>,
    pub checks: Vec<InvariantCheck>,
}

impl ExperimentReport {
    pub fn hard_failures(&self) -> Vec<&InvariantCheck> {
        self.checks.iter().filter(|c| c.hard && !c.passed()).collect()
    }
}
