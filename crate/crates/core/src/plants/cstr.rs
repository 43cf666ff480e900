use serde::{Deserialize, Serialize};

use super::{Normalization, Plant};
use crate::error::{Error, Result};
use crate::sets::BoxSet;

/// Sign convention of the coolant-jacket lag equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagSign {
    /// `dT_c/dt = (T_r - T_c)/τ`
    Stable,
    /// `dT_c/dt = (T_c - T_r)/τ`
    Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CstrParams {
    pub q0: f64,
    pub volume: f64,
    pub k0: f64,
    pub activation: f64,
    /// `-ΔH_r`
    pub reaction_heat: f64,
    pub ua: f64,
    pub density: f64,
    pub heat_capacity: f64,
    pub tau: f64,
    pub feed_concentration: f64,
    pub feed_temperature: f64,
    pub sample_time: f64,
    pub lag_sign: LagSign,
}

impl Default for CstrParams {
    fn default() -> Self {
        Self {
            q0: 10.0,
            volume: 120.0,
            k0: 6e10,
            activation: 9750.0,
            reaction_heat: 1e4,
            ua: 5e4,
            density: 1100.0,
            heat_capacity: 0.25,
            tau: 1.5,
            feed_concentration: 1.0,
            feed_temperature: 345.0,
            sample_time: 0.5,
            lag_sign: LagSign::Stable,
        }
    }
}

impl CstrParams {
    /// Continuous-time vector field at `x = (C_A, T, T_c)`, `u = T_r`.
    pub fn derivative(&self, x: &[f64], tr: f64) -> [f64; 3] {
        let (ca, t, tc) = (x[0], x[1], x[2]);
        let dilution = self.q0 / self.volume;
        let rate = self.k0 * (-self.activation / t).exp() * ca;
        let rho_cp = self.density * self.heat_capacity;
        let lag = match self.lag_sign {
            LagSign::Stable => (tr - tc) / self.tau,
            LagSign::Printed => (tc - tr) / self.tau,
        };
        [
            dilution * (self.feed_concentration - ca) - rate,
            dilution * (self.feed_temperature - t)
                + self.reaction_heat * rate / rho_cp
                + self.ua / (self.volume * rho_cp) * (tc - t),
            lag,
        ]
    }
}

/// One explicit-Euler step `x⁺ = x + T_s (f(x, u) + δ)` in original units.
pub fn cstr_step(params: &CstrParams, x: &[f64], tr: f64, delta: &[f64]) -> Result<Vec<f64>> {
    if x.len() != 3 || delta.len() != 3 {
        return Err(Error::invalid("CSTR state and disturbance have three components"));
    }
    let f = params.derivative(x, tr);
    let next: Vec<f64> = (0..3)
        .map(|i| x[i] + params.sample_time * (f[i] + delta[i]))
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            iterate: x.iter().copied().chain([tr]).collect(),
            detail: "CSTR Euler step".into(),
        });
    }
    Ok(next)
}

#[derive(Debug, Clone)]
pub struct CstrPlant {
    pub params: CstrParams,
    region: BoxSet,
    disturbance: Vec<f64>,
    normalization: Normalization,
}

impl CstrPlant {
    pub fn new(params: CstrParams, disturbance_bound: f64) -> Self {
        let region = BoxSet::new(vec![0.2, 300.0, 280.0, 280.0], vec![0.8, 370.0, 350.0, 360.0]).expect("static box");
        let normalization = Normalization::from_box(&region);
        Self {
            params,
            region,
            disturbance: vec![disturbance_bound; 3],
            normalization,
        }
    }
}

impl Default for CstrPlant {
    fn default() -> Self {
        Self::new(CstrParams::default(), 2e-5)
    }
}

impl Plant for CstrPlant {
    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn region(&self) -> &BoxSet {
        &self.region
    }

    fn disturbance_bound(&self) -> &[f64] {
        &self.disturbance
    }

    fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    fn step(&self, x: &[f64], u: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
        cstr_step(&self.params, x, u[0], delta)
    }
}
