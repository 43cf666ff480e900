//! Ground-truth plants, data generation, closed-loop simulation and metrics.

mod cstr;
pub(crate) mod data;
mod metrics;
mod numeric;
mod simulate;

pub use cstr::{cstr_step, CstrParams, CstrPlant, LagSign};
pub use data::generate_dataset;
pub use metrics::{avg_economic_cost, r_square};
pub use numeric::{numeric_lipschitz_grid, numeric_map, NumericPlant};
pub use simulate::{closed_loop_simulate, Disturbance, PredictorPlant, Trajectory, TrajectorySummary};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sets::BoxSet;

/// Per-coordinate affine map `z ↦ (z - offset) / scale` onto normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Maps `region` onto the unit box.
    pub fn from_box(region: &BoxSet) -> Self {
        Self {
            offset: region.lower.clone(),
            scale: region.lower.iter().zip(&region.upper).map(|(l, u)| u - l).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn normalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| (v - o) / s)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| v * s + o)
            .collect()
    }

    /// Normalizes the leading coordinates only (e.g. a state inside `(x, u)`).
    pub fn normalize_leading(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, v)| (v - self.offset[i]) / self.scale[i])
            .collect()
    }

    pub fn denormalize_leading(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, v)| v * self.scale[i] + self.offset[i])
            .collect()
    }

    pub fn normalize_box(&self, b: &BoxSet) -> BoxSet {
        let mut out = BoxSet::new(self.normalize(&b.lower), self.normalize(&b.upper))
            .expect("positive scales preserve box ordering");
        out.empty = b.empty;
        out
    }
}

/// A discrete-time plant `x⁺ = f(x, u) + δ` in original units.
pub trait Plant: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Constraint box over `(x, u)`.
    fn region(&self) -> &BoxSet;
    /// Componentwise bound on the disturbance argument of [`Plant::step`].
    fn disturbance_bound(&self) -> &[f64];
    fn normalization(&self) -> &Normalization;
    fn step(&self, x: &[f64], u: &[f64], delta: &[f64]) -> Result<Vec<f64>>;
}
