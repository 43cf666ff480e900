//! Configuration-driven experiment pipeline and its report.

pub mod checks;
pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{
    BenchConfig, BoundMode, DatasetConfig, ExperimentConfig, LearningConfig, LipschitzConfig, PlantConfig,
    SimulatedPlant, SimulationConfig, SweepConfig,
};
pub use pipeline::{
    bench_prediction, bounds, design_controller, economic_cost, ki_baseline, learn, prediction_errors, run_experiment,
    run_stages, simulate_all, simulate_one, sweep_alpha, with_alpha, write_outputs, Experiment, Learned, Stages,
};
pub use report::*;
