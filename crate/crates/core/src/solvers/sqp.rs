//! Sequential quadratic programming for small smooth NLPs.
//!
//! Each iteration solves an elastic (ℓ1-penalized) QP model built from a
//! damped BFGS Hessian approximation, then backtracks on the ℓ1 merit
//! function. Box bounds are kept hard in every subproblem.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::qcqp::{solve_convex_qcqp, ConvexQcqpSpec, SolveStatus};
use crate::error::{Error, Result};

/// Values and first derivatives of an NLP at one point.
#[derive(Debug, Clone)]
pub struct NlpEval {
    pub objective: f64,
    pub gradient: Vec<f64>,
    /// `c_e(x) = 0`
    pub eq: Vec<f64>,
    pub eq_jacobian: DMatrix<f64>,
    /// `c_i(x) ≤ 0`
    pub ineq: Vec<f64>,
    pub ineq_jacobian: DMatrix<f64>,
}

impl NlpEval {
    fn is_finite(&self) -> bool {
        self.objective.is_finite()
            && self.gradient.iter().all(|v| v.is_finite())
            && self.eq.iter().all(|v| v.is_finite())
            && self.ineq.iter().all(|v| v.is_finite())
            && self.eq_jacobian.iter().all(|v| v.is_finite())
            && self.ineq_jacobian.iter().all(|v| v.is_finite())
    }

    fn violation(&self) -> (f64, f64) {
        constraint_violation(&self.eq, &self.ineq)
    }
}

fn constraint_violation(eq: &[f64], ineq: &[f64]) -> (f64, f64) {
    let mut l1 = 0.0;
    let mut linf = 0.0f64;
    for v in eq {
        l1 += v.abs();
        linf = linf.max(v.abs());
    }
    for v in ineq {
        let p = v.max(0.0);
        l1 += p;
        linf = linf.max(p);
    }
    (l1, linf)
}

/// A smooth NLP `min f(x)` s.t. `c_e(x) = 0`, `c_i(x) ≤ 0`, `lb ≤ x ≤ ub`.
pub trait NlpProblem {
    fn dim(&self) -> usize;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn evaluate(&self, x: &[f64]) -> NlpEval;

    /// Objective and constraint values without derivatives.
    fn values(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let e = self.evaluate(x);
        (e.objective, e.eq, e.ineq)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Record every accepted iterate.
    pub trace: bool,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqpIterate {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub objective: f64,
    pub violation: f64,
    pub kkt_residual: f64,
    pub step_length: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqpResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    /// Largest violation of any general constraint at `x`.
    pub max_violation: f64,
    pub iterations: usize,
    pub trace: Vec<SqpIterate>,
}

const PENALTY_MAX: f64 = 1e9;

struct QpStep {
    d: Vec<f64>,
    eq_duals: Vec<f64>,
    ineq_duals: Vec<f64>,
    bound_duals: Vec<f64>,
    /// ℓ1 violation of the linearized constraints at the step.
    linear_violation: f64,
}

fn solve_subproblem(
    b: &DMatrix<f64>,
    ev: &NlpEval,
    x: &[f64],
    lb: &[f64],
    ub: &[f64],
    penalty: f64,
    tol: f64,
) -> Result<QpStep> {
    let n = x.len();
    let me = ev.eq.len();
    let mi = ev.ineq.len();
    // variables: [d, p (me), q (me), t (mi)]
    let nv = n + 2 * me + mi;
    let mut h = DMatrix::zeros(nv, nv);
    h.view_mut((0, 0), (n, n)).copy_from(b);
    let mut c = vec![penalty; nv];
    c[..n].copy_from_slice(&ev.gradient);

    let mut a_eq = DMatrix::zeros(me, nv);
    let mut b_eq = vec![0.0; me];
    for r in 0..me {
        for j in 0..n {
            a_eq[(r, j)] = ev.eq_jacobian[(r, j)];
        }
        a_eq[(r, n + r)] = -1.0;
        a_eq[(r, n + me + r)] = 1.0;
        b_eq[r] = -ev.eq[r];
    }

    let bound_rows: Vec<(usize, f64, f64)> = (0..n)
        .flat_map(|j| {
            let mut rows = Vec::new();
            if ub[j].is_finite() {
                rows.push((j, 1.0, ub[j] - x[j]));
            }
            if lb[j].is_finite() {
                rows.push((j, -1.0, x[j] - lb[j]));
            }
            rows
        })
        .collect();
    let n_slack = 2 * me + mi;
    let rows = mi + n_slack + bound_rows.len();
    let mut g = DMatrix::zeros(rows, nv);
    let mut hv = vec![0.0; rows];
    for r in 0..mi {
        for j in 0..n {
            g[(r, j)] = ev.ineq_jacobian[(r, j)];
        }
        g[(r, n + 2 * me + r)] = -1.0;
        // rows that no step inside the box can activate get a bounded rhs
        let reach: f64 = (0..n)
            .map(|j| ev.ineq_jacobian[(r, j)].abs() * (ub[j] - x[j]).max(x[j] - lb[j]))
            .sum();
        hv[r] = if reach.is_finite() { (-ev.ineq[r]).min(reach + 1.0) } else { -ev.ineq[r] };
    }
    for k in 0..n_slack {
        g[(mi + k, n + k)] = -1.0;
    }
    for (k, &(j, sign, rhs)) in bound_rows.iter().enumerate() {
        g[(mi + n_slack + k, j)] = sign;
        hv[mi + n_slack + k] = rhs.max(0.0);
    }

    let spec = ConvexQcqpSpec::new(h, c)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(g, hv);
    let sol = solve_convex_qcqp(&spec, tol.min(1e-8))?;
    if sol.status == SolveStatus::Infeasible {
        return Err(Error::Solver("elastic QP subproblem reported infeasible".into()));
    }
    let d = sol.x[..n].to_vec();
    let linear_violation = sol.x[n..].iter().map(|v| v.max(0.0)).sum();
    let mut bound_duals = vec![0.0; n];
    for (k, &(j, sign, _)) in bound_rows.iter().enumerate() {
        bound_duals[j] += sign * sol.ineq_duals[mi + n_slack + k];
    }
    Ok(QpStep {
        d,
        eq_duals: sol.eq_duals,
        ineq_duals: sol.ineq_duals[..mi].to_vec(),
        bound_duals,
        linear_violation,
    })
}

fn lagrangian_gradient(ev: &NlpEval, eq_duals: &[f64], ineq_duals: &[f64]) -> DVector<f64> {
    let mut g = DVector::from_column_slice(&ev.gradient);
    if !eq_duals.is_empty() {
        g += ev.eq_jacobian.transpose() * DVector::from_column_slice(eq_duals);
    }
    if !ineq_duals.is_empty() {
        g += ev.ineq_jacobian.transpose() * DVector::from_column_slice(ineq_duals);
    }
    g
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves an NLP from a warm start. Returns `Infeasible` when the ℓ1
/// constraint violation stalls at a positive value, and `MaxIter` when the
/// iteration budget runs out or the line search can make no further progress.
pub fn solve_nlp<P: NlpProblem + ?Sized>(problem: &P, warm_start: &[f64], options: &SqpOptions) -> Result<SqpResult> {
    let n = problem.dim();
    if warm_start.len() != n {
        return Err(Error::invalid(format!(
            "warm start has length {}, problem has {n} variables",
            warm_start.len()
        )));
    }
    if !(options.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let (lb, ub) = problem.bounds();
    if lb.len() != n || ub.len() != n {
        return Err(Error::invalid("bound vectors do not match the problem dimension"));
    }
    if lb.iter().zip(&ub).any(|(l, u)| l > u) {
        return Ok(SqpResult {
            x: warm_start.to_vec(),
            objective: f64::NAN,
            status: SolveStatus::Infeasible,
            kkt_residual: f64::INFINITY,
            max_violation: f64::INFINITY,
            iterations: 0,
            trace: Vec::new(),
        });
    }
    let mut x: Vec<f64> = warm_start
        .iter()
        .zip(lb.iter().zip(&ub))
        .map(|(v, (l, u))| v.clamp(*l, *u))
        .collect();

    let tol = options.tol;
    let mut ev = problem.evaluate(&x);
    if !ev.is_finite() {
        return Err(Error::NonFinite {
            iterate: x,
            detail: "objective or constraints at the warm start".into(),
        });
    }
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut penalty = 10.0;
    let mut trace = Vec::new();
    let mut kkt = f64::INFINITY;
    let mut status = SolveStatus::MaxIter;
    let mut stalls = 0;
    let mut iterations = 0;

    while iterations < options.max_iter {
        let (viol1, viol_inf) = ev.violation();
        let mut qp = solve_subproblem(&b, &ev, &x, &lb, &ub, penalty, tol)?;
        // raise the penalty until the model stops paying for slack, if it can
        while qp.linear_violation > 1e-9 * (1.0 + viol1) && penalty < PENALTY_MAX {
            penalty = (penalty * 10.0).min(PENALTY_MAX);
            qp = solve_subproblem(&b, &ev, &x, &lb, &ub, penalty, tol)?;
        }
        let multiplier_max = inf_norm(&qp.eq_duals).max(inf_norm(&qp.ineq_duals));
        if multiplier_max * 1.1 > penalty && penalty < PENALTY_MAX {
            penalty = (multiplier_max * 2.0).min(PENALTY_MAX);
        }

        let mut lg = lagrangian_gradient(&ev, &qp.eq_duals, &qp.ineq_duals);
        for j in 0..n {
            lg[j] += qp.bound_duals[j];
        }
        kkt = lg.amax() / inf_norm(&ev.gradient).max(1.0);
        let d_norm = inf_norm(&qp.d);
        let x_scale = 1.0 + inf_norm(&x);

        if viol_inf <= tol && kkt <= tol {
            status = SolveStatus::Optimal;
            break;
        }
        if d_norm <= 1e-14 * x_scale {
            status = if viol_inf > tol {
                SolveStatus::Infeasible
            } else if kkt <= tol.sqrt() {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIter
            };
            break;
        }
        if viol_inf > tol && penalty >= PENALTY_MAX && qp.linear_violation >= viol1 * (1.0 - 1e-9) {
            status = SolveStatus::Infeasible;
            break;
        }

        // ℓ1 merit line search
        let merit0 = ev.objective + penalty * viol1;
        let dd = DVector::from_column_slice(&qp.d);
        let directional = {
            let gd: f64 = ev.gradient.iter().zip(&qp.d).map(|(a, b)| a * b).sum();
            let v = gd - penalty * (viol1 - qp.linear_violation);
            if v < 0.0 {
                v
            } else {
                -(dd.dot(&(&b * &dd))).abs().max(1e-16)
            }
        };
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x
                .iter()
                .zip(&qp.d)
                .zip(lb.iter().zip(&ub))
                .map(|((xi, di), (l, u))| (xi + alpha * di).clamp(*l, *u))
                .collect();
            let (f, eq, ineq) = problem.values(&trial);
            let (v1, _) = constraint_violation(&eq, &ineq);
            let merit = f + penalty * v1;
            if merit.is_finite() && merit <= merit0 + 1e-4 * alpha * directional {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
        }
        let Some(x_new) = accepted else {
            stalls += 1;
            if stalls >= 3 {
                status = if viol_inf > tol {
                    SolveStatus::Infeasible
                } else if kkt <= tol.sqrt() {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::MaxIter
                };
                break;
            }
            b = DMatrix::identity(n, n);
            scaled = false;
            iterations += 1;
            continue;
        };
        stalls = 0;

        let ev_new = problem.evaluate(&x_new);
        if !ev_new.is_finite() {
            return Err(Error::NonFinite {
                iterate: x_new,
                detail: format!("objective or constraints after iteration {iterations}"),
            });
        }
        let s = DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let mut y = lagrangian_gradient(&ev_new, &qp.eq_duals, &qp.ineq_duals)
            - lagrangian_gradient(&ev, &qp.eq_duals, &qp.ineq_duals);
        let sy = s.dot(&y);
        if !scaled && sy > 0.0 {
            let yy = y.dot(&y);
            if yy > 0.0 {
                b = DMatrix::identity(n, n) * (yy / sy);
                scaled = true;
            }
        }
        let bs = &b * &s;
        let sbs = s.dot(&bs);
        if sbs > 1e-300 {
            if sy < 0.2 * sbs {
                let theta = 0.8 * sbs / (sbs - sy);
                y = &y * theta + &bs * (1.0 - theta);
            }
            let sy = s.dot(&y);
            if sy > 1e-300 {
                b += &y * y.transpose() / sy - &bs * bs.transpose() / sbs;
                b = (&b + b.transpose()) * 0.5;
            }
        }

        x = x_new;
        ev = ev_new;
        iterations += 1;
        if options.trace {
            trace.push(SqpIterate {
                iteration: iterations,
                x: x.clone(),
                objective: ev.objective,
                violation: ev.violation().1,
                kkt_residual: kkt,
                step_length: alpha * d_norm,
                penalty,
            });
        }
    }

    let (_, viol_inf) = ev.violation();
    Ok(SqpResult {
        objective: ev.objective,
        x,
        status,
        kkt_residual: kkt,
        max_violation: viol_inf,
        iterations,
        trace,
    })
}

/// Finite-horizon OCP front end: identical to [`solve_nlp`] with the
/// tolerance and iteration budget given explicitly.
pub fn solve_fhocp_nlp<P: NlpProblem + ?Sized>(
    problem: &P,
    warm_start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SqpResult> {
    solve_nlp(
        problem,
        warm_start,
        &SqpOptions {
            tol,
            max_iter,
            trace: false,
        },
    )
}
