//! Posterior Lipschitz constants, the discontinuity gap bound, and the
//! deterministic / probabilistic prediction-error bounds.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{sample_voronoi_cell, CklrPredictor, LipschitzFields};
use crate::rng::tags;
use crate::sets::BoxSet;

/// Which block of the predictor Jacobian the Lipschitz constant bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianScope {
    /// `∂f̂/∂x` only; governs error propagation along a prediction horizon.
    State,
    /// `∂f̂/∂w` over the whole model input; used by the deterministic bound.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub scope: JacobianScope,
    /// Sampled maxima before inflation.
    pub per_cluster_raw: Vec<f64>,
    /// Inflated per-cluster constants handed to downstream consumers.
    pub per_cluster: Vec<f64>,
    pub global: f64,
    pub inflation: f64,
    pub samples_per_cluster: usize,
    pub gap: f64,
}

impl LipschitzReport {
    pub fn fields(&self) -> LipschitzFields {
        LipschitzFields {
            per_cluster: self.per_cluster.clone(),
            global: self.global,
            gap: self.gap,
        }
    }
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.clone().svd(false, false).singular_values.max()
}

fn jacobian_norm(pred: &CklrPredictor, j: usize, w: &[f64], scope: JacobianScope) -> f64 {
    let (_, jac) = pred.locals[j].eval_jacobian(&pred.kernel, w);
    match scope {
        JacobianScope::Full => spectral_norm(&jac),
        JacobianScope::State => spectral_norm(&jac.columns(0, pred.state_dim).into_owned()),
    }
}

/// Monte-Carlo estimate of cluster `j`'s Lipschitz constant: the largest
/// Jacobian spectral norm over `sample_count` uniform points of
/// `(Voronoi cell j) ∩ domain`.
pub fn posterior_lipschitz(
    pred: &CklrPredictor,
    j: usize,
    sample_count: usize,
    seed: u64,
    domain: &BoxSet,
    scope: JacobianScope,
) -> Result<f64> {
    if !pred.is_fitted() {
        return Err(Error::State("predictor has not been fitted".into()));
    }
    if j >= pred.k() {
        return Err(Error::invalid(format!("cluster {j} out of range")));
    }
    if sample_count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let samples = sample_voronoi_cell(
        &pred.clusters.centers,
        j,
        domain,
        sample_count,
        seed,
        tags::POSTERIOR_LIPSCHITZ,
    )?;
    Ok(samples
        .iter()
        .map(|w| jacobian_norm(pred, j, w, scope))
        .fold(0.0, f64::max))
}

/// Posterior constants for every cluster, inflated by `1 + inflation`.
pub fn lipschitz_report(
    pred: &CklrPredictor,
    domain: &BoxSet,
    sample_count: usize,
    seed: u64,
    inflation: f64,
    scope: JacobianScope,
) -> Result<LipschitzReport> {
    if !(inflation >= 0.0) {
        return Err(Error::invalid("inflation must be nonnegative"));
    }
    let raw = (0..pred.k())
        .into_par_iter()
        .map(|j| posterior_lipschitz(pred, j, sample_count, seed, domain, scope))
        .collect::<Result<Vec<f64>>>()?;
    let per_cluster: Vec<f64> = raw.iter().map(|l| l * (1.0 + inflation)).collect();
    Ok(LipschitzReport {
        scope,
        global: per_cluster.iter().copied().fold(0.0, f64::max),
        per_cluster_raw: raw,
        per_cluster,
        inflation,
        samples_per_cluster: sample_count,
        gap: gap_bound(pred),
    })
}

/// Upper bound on the jump of the predictor across any cluster interface:
/// `max_{j1,j2} σ²(Σ|ω^{j1}| + Σ|ω^{j2}|)`, maximized over outputs.
pub fn gap_bound(pred: &CklrPredictor) -> f64 {
    let mut best = 0.0f64;
    for d in 0..pred.state_dim {
        let l1: Vec<f64> = pred.locals.iter().map(|m| m.weight_l1(d)).collect();
        for a in &l1 {
            for b in &l1 {
                best = best.max(pred.kernel.variance * (a + b));
            }
        }
    }
    best
}

/// Largest distance from a point of `(cell j) ∩ domain` to the nearest
/// training input of cluster `j`, estimated on `sample_count` samples.
pub fn covering_radius(
    pred: &CklrPredictor,
    j: usize,
    domain: &BoxSet,
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    let samples = sample_voronoi_cell(&pred.clusters.centers, j, domain, sample_count, seed, tags::COVERING)?;
    let local = &pred.locals[j];
    Ok(samples
        .iter()
        .map(|w| nearest_distance(local, w))
        .fold(0.0, f64::max))
}

pub(crate) fn nearest_distance(local: &crate::regression::LocalModel, w: &[f64]) -> f64 {
    (0..local.len())
        .map(|i| {
            local
                .input(i)
                .iter()
                .zip(w)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundInputs {
    Deterministic {
        plant_lipschitz: f64,
        predictor_lipschitz: f64,
        noise_bound: f64,
        residual_slack: f64,
        covering_radius: f64,
    },
    Probabilistic {
        max_test_error: f64,
        margin: f64,
        hit_probability: f64,
        test_count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub mu_bar: f64,
    pub confidence: f64,
    pub inputs: BoundInputs,
}

impl ErrorBound {
    pub fn is_deterministic(&self) -> bool {
        matches!(self.inputs, BoundInputs::Deterministic { .. })
    }
}

/// `μ̄ = (L_f + L_j)·r + 2δ̄ + δ̄_s` with confidence 1.
pub fn deterministic_bound(
    covering_radius: f64,
    plant_lipschitz: f64,
    predictor_lipschitz: f64,
    noise_bound: f64,
    residual_slack: f64,
) -> Result<ErrorBound> {
    let args = [covering_radius, plant_lipschitz, predictor_lipschitz, noise_bound, residual_slack];
    if args.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("deterministic bound arguments must be finite and nonnegative"));
    }
    Ok(ErrorBound {
        mu_bar: (plant_lipschitz + predictor_lipschitz) * covering_radius + 2.0 * noise_bound + residual_slack,
        confidence: 1.0,
        inputs: BoundInputs::Deterministic {
            plant_lipschitz,
            predictor_lipschitz,
            noise_bound,
            residual_slack,
            covering_radius,
        },
    })
}

/// `μ̄ = max(test errors) + a`, holding with probability `1 - (1-p)^{N_t}`.
pub fn probabilistic_bound(test_errors: &[f64], margin: f64, hit_probability: f64) -> Result<ErrorBound> {
    if test_errors.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    if !(margin > 0.0) {
        return Err(Error::invalid("margin a must be positive"));
    }
    if !(hit_probability > 0.0 && hit_probability <= 1.0) {
        return Err(Error::invalid("p must lie in (0, 1]"));
    }
    if test_errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::invalid("test errors must be finite"));
    }
    let max = test_errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = test_errors.len();
    Ok(ErrorBound {
        mu_bar: max + margin,
        confidence: coverage_confidence(hit_probability, n),
        inputs: BoundInputs::Probabilistic {
            max_test_error: max,
            margin,
            hit_probability,
            test_count: n,
        },
    })
}

/// `1 - (1-p)^n`
pub fn coverage_confidence(p: f64, n: usize) -> f64 {
    1.0 - (1.0 - p).powi(n as i32)
}

/// Heuristic `p̂`: empirical frequency of errors within `a` of `top`.
/// Not a certified quantity; the harness labels it as an estimate.
pub fn estimate_hit_probability(errors: &[f64], top: f64, margin: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    let hits = errors.iter().filter(|&&e| e >= top - margin && e <= top).count();
    hits as f64 / errors.len() as f64
}
