use super::{Normalization, Plant};
use crate::error::{Error, Result};
use crate::sets::BoxSet;

/// `y = 0.8(x - 10)² + 8 cos(u) + δ` on `(x, u) ∈ [0, 20]²`.
pub fn numeric_map(x: f64, u: f64, delta: f64) -> Result<f64> {
    if !(0.0..=20.0).contains(&x) || !(0.0..=20.0).contains(&u) {
        return Err(Error::invalid(format!("(x, u) = ({x}, {u}) lies outside [0, 20]²")));
    }
    Ok(0.8 * (x - 10.0).powi(2) + 8.0 * u.cos() + delta)
}

/// Largest gradient norm of the noise-free map over a `resolution²` grid.
pub fn numeric_lipschitz_grid(resolution: usize) -> f64 {
    let pts: Vec<f64> = (0..resolution)
        .map(|i| 20.0 * i as f64 / (resolution - 1) as f64)
        .collect();
    let mut best = 0.0f64;
    for &x in &pts {
        let gx = 1.6 * (x - 10.0);
        for &u in &pts {
            let gu = -8.0 * u.sin();
            best = best.max(gx.hypot(gu));
        }
    }
    best
}

/// The static map as a one-output plant. Learning happens in raw units,
/// so the normalization is the identity.
#[derive(Debug, Clone)]
pub struct NumericPlant {
    region: BoxSet,
    noise: Vec<f64>,
    normalization: Normalization,
}

impl NumericPlant {
    pub fn new(noise_bound: f64) -> Self {
        Self {
            region: BoxSet::new(vec![0.0, 0.0], vec![20.0, 20.0]).expect("static box"),
            noise: vec![noise_bound],
            normalization: Normalization::identity(2),
        }
    }
}

impl Default for NumericPlant {
    fn default() -> Self {
        Self::new(1.0)
    }
}

impl Plant for NumericPlant {
    fn state_dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn region(&self) -> &BoxSet {
        &self.region
    }

    fn disturbance_bound(&self) -> &[f64] {
        &self.noise
    }

    fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    fn step(&self, x: &[f64], u: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![numeric_map(x[0], u[0], delta[0])?])
    }
}
