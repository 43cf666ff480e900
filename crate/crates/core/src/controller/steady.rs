use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::EconomicCost;
use super::model::Model;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, tags};
use crate::sets::BoxSet;
use crate::solvers::{solve_nlp, NlpEval, NlpProblem, SolveStatus, SqpOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub cost: f64,
    /// `‖x_s - f̂(x_s, u_s)‖`
    pub residual: f64,
    pub cluster: usize,
    pub converged_starts: usize,
}

struct SteadyProblem<'a> {
    model: &'a dyn Model,
    cost: &'a dyn EconomicCost,
    region: &'a BoxSet,
}

impl NlpProblem for SteadyProblem<'_> {
    fn dim(&self) -> usize {
        self.region.dim()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.region.lower.clone(), self.region.upper.clone())
    }

    fn evaluate(&self, z: &[f64]) -> NlpEval {
        let n = self.model.state_dim();
        let (x, u) = z.split_at(n);
        let (next, a, b) = self.model.step_jacobian(x, u);
        let mut gx = vec![0.0; n];
        let mut gu = vec![0.0; u.len()];
        let objective = self.cost.gradient(x, u, &mut gx, &mut gu);
        let mut jac = DMatrix::zeros(n, z.len());
        for r in 0..n {
            for c in 0..n {
                jac[(r, c)] = if r == c { 1.0 } else { 0.0 } - a[(r, c)];
            }
            for c in 0..u.len() {
                jac[(r, n + c)] = -b[(r, c)];
            }
        }
        gx.extend(gu);
        NlpEval {
            objective,
            gradient: gx,
            eq: x.iter().zip(&next).map(|(a, b)| a - b).collect(),
            eq_jacobian: jac,
            ineq: Vec::new(),
            ineq_jacobian: DMatrix::zeros(0, z.len()),
        }
    }

    fn values(&self, z: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let n = self.model.state_dim();
        let (x, u) = z.split_at(n);
        let next = self.model.step(x, u);
        (
            self.cost.eval(x, u),
            x.iter().zip(&next).map(|(a, b)| a - b).collect(),
            Vec::new(),
        )
    }
}

fn residual(model: &dyn Model, x: &[f64], u: &[f64]) -> f64 {
    let next = model.step(x, u);
    x.iter().zip(&next).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Newton refinement of the fixed point in `x` with `u` held fixed.
fn polish(model: &dyn Model, x: &mut Vec<f64>, u: &[f64]) {
    let n = x.len();
    for _ in 0..20 {
        let (next, a, _) = model.step_jacobian(x, u);
        let r = DVector::from_iterator(n, x.iter().zip(&next).map(|(p, q)| p - q));
        if r.amax() < 1e-15 {
            break;
        }
        let Some(inv) = (DMatrix::identity(n, n) - a).try_inverse() else {
            break;
        };
        let trial: Vec<f64> = x.iter().zip((inv * r).iter()).map(|(p, d)| p - d).collect();
        if residual(model, &trial, u) < residual(model, x, u) {
            *x = trial;
        } else {
            break;
        }
    }
}

/// `min L_e(x, u)` over `(x, u) ∈ region` with `x = f̂(x, u)`, from
/// `starts` uniform initial points. The best converged start wins; ties go
/// to the earliest start.
pub fn compute_steady_state(
    model: &dyn Model,
    cost: &dyn EconomicCost,
    region: &BoxSet,
    starts: usize,
    seed: u64,
    options: &SqpOptions,
) -> Result<SteadyState> {
    let n = model.state_dim();
    if region.dim() != n + model.input_dim() {
        return Err(Error::invalid("region must cover (x, u)"));
    }
    if starts == 0 {
        return Err(Error::invalid("at least one start is required"));
    }
    let problem = SteadyProblem { model, cost, region };
    let results: Vec<Option<(Vec<f64>, Vec<f64>, f64, f64)>> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, tags::STEADY_STARTS, s as u64);
            let z0 = region.sample(&mut rng);
            let r = solve_nlp(&problem, &z0, options).ok()?;
            if r.status == SolveStatus::Infeasible {
                return None;
            }
            let (x, u) = r.x.split_at(n);
            let mut x = x.to_vec();
            let u = u.to_vec();
            polish(model, &mut x, &u);
            let res = residual(model, &x, &u);
            let mut z = x.clone();
            z.extend_from_slice(&u);
            if res <= 1e-6 && region.violation(&z) <= 1e-9 {
                Some((x, u, cost.eval(&z[..n], &z[n..]), res))
            } else {
                None
            }
        })
        .collect();
    let converged = results.iter().filter(|r| r.is_some()).count();
    let best = results
        .into_iter()
        .flatten()
        .reduce(|best, cand| if cand.2 < best.2 { cand } else { best })
        .ok_or_else(|| Error::Infeasible {
            constraint: "steady state".into(),
            detail: format!("none of {starts} starts reached a feasible fixed point"),
        })?;
    let (x, u, c, res) = best;
    Ok(SteadyState {
        cluster: model.region_of(&x, &u),
        x,
        u,
        cost: c,
        residual: res,
        converged_starts: converged,
    })
}
