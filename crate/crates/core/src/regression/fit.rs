//! Per-cluster kernel weight fitting and the offline learning pipeline.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::kmeans::{kmeans_fit, nearest};
use crate::regression::lipschitz::estimate_output_lipschitz;
use crate::regression::predictor::{CklrPredictor, LocalModel};
use crate::regression::{Dataset, RbfKernel};
use crate::rng::{stream_rng, tags};
use crate::sets::BoxSet;
use crate::solvers::qcqp::{solve_convex_qcqp, ConvexQcqpSpec, SocRow, SolveStatus};

/// Weight-fit settings shared by every cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Noise compensation λ in the pairwise Lipschitz estimate.
    pub lambda: f64,
    /// Residual band half-width δ̄_s.
    pub residual_slack: f64,
    /// Gradient-cap sample count S per cluster.
    pub gradient_samples: usize,
    #[serde(default = "default_solve_tol")]
    pub solve_tol: f64,
    pub seed: u64,
    #[serde(default)]
    pub prior: PriorScope,
}

/// Data used for the prior Lipschitz estimate `L̄` of each output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorScope {
    /// Pairs within the cluster only.
    #[default]
    Cluster,
    /// All pairs in the dataset; one componentwise constant shared by every cluster.
    Global,
}

fn default_solve_tol() -> f64 {
    1e-6
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("λ must be nonnegative"));
        }
        if !(self.residual_slack > 0.0) {
            return Err(Error::invalid("residual slack must be positive"));
        }
        if !(self.solve_tol > 0.0) {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CklrConfig {
    pub clusters: usize,
    pub kmeans_iterations: usize,
    pub kernel: RbfKernel,
    pub fit: FitConfig,
}

/// Timing and size of each cluster's fit, kept out of the predictor so that
/// the model itself stays bit-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub cluster_sizes: Vec<usize>,
    pub solve_seconds: Vec<f64>,
    pub max_solve_seconds: f64,
}

/// Attempts allowed per accepted rejection sample.
const REJECTION_ATTEMPTS: usize = 200_000;

/// Uniform samples of `(Voronoi cell j) ∩ domain` by rejection.
///
/// Sample `i` uses its own generator keyed by `(seed, tag, j, i)`.
pub fn sample_voronoi_cell(
    centers: &[Vec<f64>],
    j: usize,
    domain: &BoxSet,
    count: usize,
    seed: u64,
    tag: u64,
) -> Result<Vec<Vec<f64>>> {
    let stream = tag ^ ((j as u64 + 1) << 24);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = stream_rng(seed, stream, i as u64);
        let mut found = None;
        for _ in 0..REJECTION_ATTEMPTS {
            let w = domain.sample(&mut rng);
            if nearest(centers, &w).0 == j {
                found = Some(w);
                break;
            }
        }
        match found {
            Some(w) => out.push(w),
            None => {
                return Err(Error::SamplingExhausted {
                    cluster: j,
                    accepted: out.len(),
                    requested: count,
                })
            }
        }
    }
    Ok(out)
}

/// Solves the minimum-norm weight problem for one output coordinate of one
/// cluster:
///
/// `min ‖ω‖²` s.t. `|ωᵀφ(wᵢ) - yᵢ| ≤ δ̄_s` for every sample and
/// `‖Σᵢ ωᵢ ∇φᵢ(w_s)‖ ≤ L̄` at every constraint sample `w_s`.
///
/// The returned weights satisfy every constraint within `config.solve_tol`.
pub fn fit_cluster_weights(
    inputs: &[Vec<f64>],
    targets: &[f64],
    prior_lipschitz: f64,
    kernel: &RbfKernel,
    config: &FitConfig,
    samples: &[Vec<f64>],
) -> Result<Vec<f64>> {
    config.validate()?;
    if !(prior_lipschitz >= 0.0) {
        return Err(Error::invalid("prior Lipschitz constant must be nonnegative"));
    }
    let n = inputs.len();
    if n == 0 || targets.len() != n {
        return Err(Error::invalid("cluster data is empty or mismatched"));
    }
    let width = inputs[0].len();
    let tol = config.solve_tol;
    let gram = DMatrix::from_fn(n, n, |i, k| kernel.eval(&inputs[i], &inputs[k]));
    let mut g = DMatrix::zeros(2 * n, n);
    let mut h = vec![0.0; 2 * n];
    for i in 0..n {
        for k in 0..n {
            g[(i, k)] = gram[(i, k)];
            g[(n + i, k)] = -gram[(i, k)];
        }
        h[i] = targets[i] + config.residual_slack;
        h[n + i] = -targets[i] + config.residual_slack;
    }
    let cones: Vec<SocRow> = samples
        .iter()
        .map(|ws| {
            let mut m = DMatrix::zeros(width, n);
            let mut grad = vec![0.0; width];
            for k in 0..n {
                kernel.gradient(ws, &inputs[k], &mut grad);
                for (r, gv) in grad.iter().enumerate() {
                    m[(r, k)] = *gv;
                }
            }
            SocRow {
                matrix: m,
                offset: vec![0.0; width],
                radius: prior_lipschitz,
            }
        })
        .collect();
    let stated = ConvexQcqpSpec::new(DMatrix::identity(n, n) * 2.0, vec![0.0; n])
        .with_inequalities(g, h)
        .with_cones(cones);
    let tightened = |margin: f64| ConvexQcqpSpec {
        ineq_rhs: stated.ineq_rhs.iter().map(|v| v - margin).collect(),
        cones: stated
            .cones
            .iter()
            .map(|c| SocRow {
                radius: (c.radius - margin).max(0.0),
                ..c.clone()
            })
            .collect(),
        ..stated.clone()
    };

    // Solve against tightened constraints so that an interior-point answer
    // lands inside the stated ones. Ill-conditioned Gram matrices leave
    // larger residuals, so the margin grows until the stated set is met.
    let cap = 0.5 * config.residual_slack.min(prior_lipschitz);
    let mut margin = (10.0 * tol).max(0.01 * config.residual_slack).min(cap);
    loop {
        let spec = tightened(margin);
        let sol = solve_convex_qcqp(&spec, tol)?;
        if sol.status == SolveStatus::Infeasible {
            let band_only = ConvexQcqpSpec {
                cones: vec![],
                ..spec.clone()
            };
            let which = match solve_convex_qcqp(&band_only, tol).map(|s| s.status) {
                Ok(SolveStatus::Infeasible) => "residual band",
                _ => "gradient cap",
            };
            return Err(Error::Infeasible {
                constraint: which.into(),
                detail: format!(
                    "weight fit on {n} points with δ̄_s = {} and L̄ = {prior_lipschitz}",
                    config.residual_slack
                ),
            });
        }
        let viol = stated.max_violation(&sol.x);
        if viol <= tol {
            return Ok(sol.x);
        }
        if margin >= cap {
            return Err(Error::Solver(format!(
                "weight fit stopped with status {:?} after {} iterations, violating constraints by {viol:.3e}",
                sol.status, sol.iterations
            )));
        }
        log::debug!("weight fit missed by {viol:.3e}; retrying with margin {:.3e}", margin * 10.0);
        margin = (margin * 10.0).min(cap);
    }
}

/// Offline learning: k-means partition, per-output pairwise Lipschitz
/// estimates and per-cluster weight fits (run concurrently, collected in
/// cluster order).
pub fn fit_cklr(dataset: &Dataset, domain: &BoxSet, config: &CklrConfig) -> Result<(CklrPredictor, FitReport)> {
    config.fit.validate()?;
    dataset.check_within(domain)?;
    let clusters = kmeans_fit(dataset, config.clusters, config.kmeans_iterations, config.fit.seed)?;
    let n_out = dataset.state_dim();
    let width = dataset.input_width();
    let global_prior = match config.fit.prior {
        PriorScope::Cluster => None,
        PriorScope::Global => Some(
            (0..n_out)
                .into_par_iter()
                .map(|d| estimate_output_lipschitz(dataset.inputs(), dataset.outputs(), d, config.fit.lambda))
                .collect::<Result<Vec<f64>>>()?,
        ),
    };

    let fitted: Vec<(LocalModel, f64)> = (0..clusters.k())
        .into_par_iter()
        .map(|j| -> Result<(LocalModel, f64)> {
            let members = clusters.members(j);
            let (inputs, outputs) = dataset.subset(&members);
            let samples = sample_voronoi_cell(
                &clusters.centers,
                j,
                domain,
                config.fit.gradient_samples,
                config.fit.seed,
                tags::GRADIENT_SAMPLES,
            )?;
            let start = Instant::now();
            let mut weights = Vec::with_capacity(n_out * inputs.len());
            let mut priors = Vec::with_capacity(n_out);
            for d in 0..n_out {
                let prior = match &global_prior {
                    Some(g) => g[d],
                    None => estimate_output_lipschitz(&inputs, &outputs, d, config.fit.lambda)?,
                };
                let targets: Vec<f64> = outputs.iter().map(|y| y[d]).collect();
                let w = fit_cluster_weights(&inputs, &targets, prior, &config.kernel, &config.fit, &samples)
                    .map_err(|e| match e {
                        Error::Infeasible { constraint, detail } => Error::Infeasible {
                            constraint,
                            detail: format!("cluster {j}, output {d}: {detail}"),
                        },
                        other => other,
                    })?;
                weights.extend(w);
                priors.push(prior);
            }
            let secs = start.elapsed().as_secs_f64();
            Ok((
                LocalModel {
                    input_width: width,
                    output_dim: n_out,
                    inputs: inputs.concat(),
                    outputs: outputs.concat(),
                    weights,
                    prior_lipschitz: priors,
                    constraint_samples: samples,
                },
                secs,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let (locals, secs): (Vec<LocalModel>, Vec<f64>) = fitted.into_iter().unzip();
    let report = FitReport {
        cluster_sizes: locals.iter().map(LocalModel::len).collect(),
        max_solve_seconds: secs.iter().copied().fold(0.0, f64::max),
        solve_seconds: secs,
    };
    Ok((
        CklrPredictor {
            state_dim: n_out,
            input_dim: dataset.input_dim(),
            kernel: config.kernel,
            clusters,
            locals,
            lipschitz: None,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(slack: f64) -> FitConfig {
        FitConfig {
            lambda: 0.0,
            residual_slack: slack,
            gradient_samples: 0,
            solve_tol: 1e-6,
            seed: 0,
            prior: PriorScope::Cluster,
        }
    }

    #[test]
    fn one_point_interpolation() {
        let k = RbfKernel::new(1.0, 1.0).unwrap();
        let w = fit_cluster_weights(&[vec![0.5]], &[1.0], 0.0, &k, &cfg(1e-3), &[]).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].abs() <= 1.0 + 1e-9);
        assert!((w[0] - 1.0).abs() <= 1e-3 + 1e-6);
    }

    #[test]
    fn zero_targets_give_zero_weights() {
        let k = RbfKernel::new(1.0, 0.5).unwrap();
        let inputs = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.3, 0.8]];
        let samples = vec![vec![0.5, 0.5], vec![0.1, 0.9]];
        let w = fit_cluster_weights(&inputs, &[0.0; 3], 0.0, &k, &cfg(0.1), &samples).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-6), "{w:?}");
    }

    #[test]
    fn too_tight_band_with_zero_slope_reports_gradient_cap() {
        // band alone is satisfiable, but a zero gradient cap forbids the slope
        let k = RbfKernel::new(1.0, 1.0).unwrap();
        let inputs = vec![vec![0.0], vec![1.0]];
        let samples: Vec<Vec<f64>> = (0..11).map(|i| vec![i as f64 / 10.0]).collect();
        let err = fit_cluster_weights(&inputs, &[0.0, 1.0], 0.0, &k, &cfg(0.01), &samples).unwrap_err();
        match err {
            Error::Infeasible { constraint, .. } => assert_eq!(constraint, "gradient cap"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn residual_band_and_cap_hold_on_a_smooth_target() {
        let k = RbfKernel::new(1.0, 0.4).unwrap();
        let inputs: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 / 14.0]).collect();
        let targets: Vec<f64> = inputs.iter().map(|w| (3.0 * w[0]).sin()).collect();
        let samples: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 39.0]).collect();
        let c = cfg(0.05);
        let w = fit_cluster_weights(&inputs, &targets, 3.0, &k, &c, &samples).unwrap();
        for (wi, y) in inputs.iter().zip(&targets) {
            let pred: f64 = inputs.iter().zip(&w).map(|(c, om)| om * k.eval(wi, c)).sum();
            assert!((pred - y).abs() <= 0.05 + 1e-6);
        }
        for s in &samples {
            let mut g = [0.0];
            let mut total = 0.0;
            for (c, om) in inputs.iter().zip(&w) {
                k.gradient(s, c, &mut g);
                total += om * g[0];
            }
            assert!(total.abs() <= 3.0 + 1e-6);
        }
    }

    #[test]
    fn cell_samples_route_to_their_cell() {
        let centers = vec![vec![0.2, 0.2], vec![0.8, 0.8]];
        let dom = BoxSet::unit(2);
        let s = sample_voronoi_cell(&centers, 1, &dom, 100, 7, 99).unwrap();
        assert!(s.iter().all(|w| nearest(&centers, w).0 == 1 && dom.contains(w)));
        let again = sample_voronoi_cell(&centers, 1, &dom, 100, 7, 99).unwrap();
        assert_eq!(s, again);
    }
}
