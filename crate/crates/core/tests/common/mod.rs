#![allow(dead_code)]

use lempc::controller::{ControllerConfig, EconomicCost, LinearModel, QuadraticCost, SteadyState, TerminalIngredients};
use lempc::sets::BoxSet;
use lempc::solvers::SqpOptions;
use nalgebra::DMatrix;

pub fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// `x⁺ = 0.5 x + u`
pub fn toy() -> LinearModel {
    LinearModel::new(scalar(0.5), scalar(1.0))
}

pub fn region() -> BoxSet {
    BoxSet::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap()
}

pub fn config(horizon: usize, alpha: f64) -> ControllerConfig {
    ControllerConfig {
        horizon,
        alpha,
        q_diag: vec![1.0],
        r_diag: vec![1.0],
        steady_starts: 4,
        solver: SqpOptions {
            tol: 1e-8,
            ..SqpOptions::default()
        },
        ..ControllerConfig::default()
    }
}

pub fn origin() -> SteadyState {
    SteadyState {
        x: vec![0.0],
        u: vec![0.0],
        cost: 0.0,
        residual: 0.0,
        cluster: 0,
        converged_starts: 1,
    }
}

pub fn quadratic(x_ref: f64, u_ref: f64) -> QuadraticCost {
    QuadraticCost::new(scalar(1.0), scalar(1.0), vec![x_ref], vec![u_ref])
}

/// Positive root of `p² - p/4 - 1 = 0`, the scalar Riccati fixed point for
/// `a = 0.5, b = q = r = 1`.
pub fn riccati_oracle() -> f64 {
    (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0
}

/// Backward recursion of the finite-horizon cost-to-go from terminal
/// weight `p_n`; returns `(P_0, gains K_0..K_{N-1})`.
pub fn finite_horizon_lqr(p_n: f64, horizon: usize) -> (f64, Vec<f64>) {
    let (a, b, q, r) = (0.5, 1.0, 1.0, 1.0);
    let mut p = p_n;
    let mut gains = vec![0.0; horizon];
    for i in (0..horizon).rev() {
        let s = r + b * b * p;
        gains[i] = -a * b * p / s;
        p = q + a * a * p - (a * b * p).powi(2) / s;
    }
    (p, gains)
}

/// Best economic cost over a 201² input grid for the horizon-2 toy problem
/// from `x0`, among points meeting the state box, the terminal level and
/// the contraction bound `pi`.
pub fn grid_best(terminal: &TerminalIngredients, econ: &QuadraticCost, x0: f64, pi: f64) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..201 {
        for j in 0..201 {
            let u = [-1.0 + 0.01 * i as f64, -1.0 + 0.01 * j as f64];
            let x1 = 0.5 * x0 + u[0];
            let x2 = 0.5 * x1 + u[1];
            let ja = x0 * x0 + u[0] * u[0] + x1 * x1 + u[1] * u[1] + terminal.level(&[x2]);
            if x1.abs() > 1.0 || terminal.level(&[x2]) > terminal.alpha_n || ja > pi {
                continue;
            }
            let je = econ.eval(&[x0], &u[..1]) + econ.eval(&[x1], &u[1..]);
            best = best.min(je);
        }
    }
    best
}
