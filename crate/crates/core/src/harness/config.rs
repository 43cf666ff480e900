use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::plants::{CstrParams, CstrPlant, Disturbance, NumericPlant, Plant};
use crate::regression::{CklrConfig, FitConfig, PriorScope, RbfKernel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantConfig {
    /// `y = 0.8(x-10)² + 8cos(u) + δ` on `[0,20]²`.
    Numeric { noise_bound: f64 },
    /// Reactor with economic cost `(T_r - cost_offset) + (T - 345)²`.
    Cstr {
        #[serde(default)]
        params: CstrParams,
        disturbance_bound: f64,
        cost_offset: f64,
    },
}

impl PlantConfig {
    pub fn build(&self) -> Box<dyn Plant> {
        match self {
            PlantConfig::Numeric { noise_bound } => Box::new(NumericPlant::new(*noise_bound)),
            PlantConfig::Cstr {
                params,
                disturbance_bound,
                ..
            } => Box::new(CstrPlant::new(params.clone(), *disturbance_bound)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PlantConfig::Numeric { .. } => "numeric",
            PlantConfig::Cstr { .. } => "cstr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub count: usize,
    /// Fresh points for R², test errors and the probabilistic bound.
    pub test_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningConfig {
    pub clusters: usize,
    pub kmeans_iterations: usize,
    pub variance: f64,
    pub length_scale: f64,
    pub lambda: f64,
    pub residual_slack: f64,
    pub gradient_samples: usize,
    #[serde(default = "default_solve_tol")]
    pub solve_tol: f64,
    #[serde(default)]
    pub prior: PriorScope,
}

fn default_solve_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConfig {
    pub samples_per_cluster: usize,
    pub inflation: f64,
}

/// How `μ̄` handed to the controller is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundMode {
    /// Covering-radius bound with a known plant Lipschitz constant.
    Deterministic {
        plant_lipschitz: f64,
        covering_samples: usize,
    },
    /// Largest test error plus a margin.
    Probabilistic { margin: f64 },
    /// A fraction of the largest bound the terminal design tolerates.
    Admissible { fraction: f64 },
}

/// Where closed-loop successors come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulatedPlant {
    #[default]
    True,
    /// The learned predictor plus a disturbance bounded by `μ̄`.
    Predictor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Normalized initial states.
    pub initial_states: Vec<Vec<f64>>,
    pub steps: usize,
    pub disturbance: Disturbance,
    #[serde(default)]
    pub plant: SimulatedPlant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub initial_state: Vec<f64>,
    pub steps: usize,
    /// Falls back to the simulation section, then to the true plant.
    #[serde(default)]
    pub plant: Option<SimulatedPlant>,
    /// Falls back to the simulation section, then to no disturbance.
    #[serde(default)]
    pub disturbance: Option<Disturbance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub queries: usize,
    /// Noise allowance of the kinky-inference baseline.
    pub ki_lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    /// Drives data, clustering, constraint samples and Monte-Carlo estimates.
    pub seed: u64,
    pub plant: PlantConfig,
    pub dataset: DatasetConfig,
    pub learning: LearningConfig,
    pub lipschitz: LipschitzConfig,
    pub bound: BoundMode,
    #[serde(default)]
    pub controller: Option<ControllerConfig>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn cklr(&self) -> Result<CklrConfig> {
        let l = &self.learning;
        Ok(CklrConfig {
            clusters: l.clusters,
            kmeans_iterations: l.kmeans_iterations,
            kernel: RbfKernel::new(l.variance, l.length_scale)?,
            fit: FitConfig {
                lambda: l.lambda,
                residual_slack: l.residual_slack,
                gradient_samples: l.gradient_samples,
                solve_tol: l.solve_tol,
                seed: self.seed,
                prior: l.prior,
            },
        })
    }

    /// Checks every section before any compute starts.
    pub fn validate(&self) -> Result<()> {
        if self.dataset.count == 0 {
            return Err(Error::invalid("dataset size must be at least 1"));
        }
        if self.dataset.test_count == 0 {
            return Err(Error::invalid("test set size must be at least 1"));
        }
        let l = &self.learning;
        if l.clusters == 0 || l.clusters > self.dataset.count {
            return Err(Error::invalid("cluster count must lie in 1..=N_D"));
        }
        self.cklr()?.fit.validate()?;
        if self.lipschitz.samples_per_cluster == 0 || !(self.lipschitz.inflation >= 0.0) {
            return Err(Error::invalid("Lipschitz sampling needs a positive count and nonnegative inflation"));
        }
        match &self.bound {
            BoundMode::Deterministic {
                plant_lipschitz,
                covering_samples,
            } => {
                if !(*plant_lipschitz >= 0.0) || *covering_samples == 0 {
                    return Err(Error::invalid("deterministic bound needs L_f ≥ 0 and covering samples"));
                }
            }
            BoundMode::Probabilistic { margin } => {
                if !(*margin > 0.0) {
                    return Err(Error::invalid("margin a must be positive"));
                }
            }
            BoundMode::Admissible { fraction } => {
                if !(*fraction > 0.0 && *fraction < 1.0) {
                    return Err(Error::invalid("admissible fraction must lie in (0, 1)"));
                }
            }
        }
        let needs_controller = self.simulation.is_some() || self.sweep.is_some();
        if let Some(c) = &self.controller {
            c.validate()?;
            if !matches!(self.plant, PlantConfig::Cstr { .. }) {
                return Err(Error::invalid("controller experiments need the reactor plant"));
            }
        } else if needs_controller {
            return Err(Error::invalid("simulation and sweep sections need a controller section"));
        }
        if matches!(self.bound, BoundMode::Admissible { .. }) && self.controller.is_none() {
            return Err(Error::invalid("the admissible bound needs a controller section"));
        }
        if let Some(s) = &self.simulation {
            if s.initial_states.iter().any(|x| x.len() != 3) {
                return Err(Error::invalid("initial states must have the plant's state dimension"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.alphas.is_empty() {
                return Err(Error::invalid("α list is empty"));
            }
            if s.alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
                return Err(Error::invalid("α values must lie in (0, 1]"));
            }
            if s.initial_state.len() != 3 {
                return Err(Error::invalid("sweep initial state must have the plant's state dimension"));
            }
        }
        Ok(())
    }
}
