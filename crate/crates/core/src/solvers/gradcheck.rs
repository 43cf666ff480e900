//! Central finite-difference validation of user-supplied NLP derivatives.

use serde::{Deserialize, Serialize};

use super::sqp::NlpProblem;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, tags};
use rand::Rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientCheck {
    pub points: usize,
    /// Largest `|fd - analytic| / max(1, |analytic|)` over all entries.
    pub max_relative_error: f64,
    pub worst_point: Vec<f64>,
    pub passed: bool,
}

/// Compares the objective gradient and constraint Jacobians against central
/// differences with step `h` at each point.
pub fn check_derivatives<P: NlpProblem + ?Sized>(
    problem: &P,
    points: &[Vec<f64>],
    h: f64,
    rel_tol: f64,
) -> Result<GradientCheck> {
    let n = problem.dim();
    if points.is_empty() {
        return Err(Error::invalid("no points to check"));
    }
    let mut worst = 0.0f64;
    let mut worst_point = points[0].clone();
    for x in points {
        if x.len() != n {
            return Err(Error::invalid("check point has the wrong dimension"));
        }
        let ev = problem.evaluate(x);
        let mut xp = x.clone();
        for j in 0..n {
            xp[j] = x[j] + h;
            let (fp, ep, ip) = problem.values(&xp);
            xp[j] = x[j] - h;
            let (fm, em, im) = problem.values(&xp);
            xp[j] = x[j];
            let mut err = rel(ev.gradient[j], (fp - fm) / (2.0 * h));
            for r in 0..ep.len() {
                err = err.max(rel(ev.eq_jacobian[(r, j)], (ep[r] - em[r]) / (2.0 * h)));
            }
            for r in 0..ip.len() {
                err = err.max(rel(ev.ineq_jacobian[(r, j)], (ip[r] - im[r]) / (2.0 * h)));
            }
            if !err.is_finite() {
                return Err(Error::NonFinite {
                    iterate: x.clone(),
                    detail: format!("finite difference in coordinate {j}"),
                });
            }
            if err > worst {
                worst = err;
                worst_point = x.clone();
            }
        }
    }
    Ok(GradientCheck {
        points: points.len(),
        max_relative_error: worst,
        worst_point,
        passed: worst <= rel_tol,
    })
}

fn rel(analytic: f64, fd: f64) -> f64 {
    (fd - analytic).abs() / analytic.abs().max(1.0)
}

/// Uniform points inside the problem's box bounds, pulled in by `h` so the
/// difference stencil stays feasible.
pub fn random_points<P: NlpProblem + ?Sized>(problem: &P, count: usize, h: f64, seed: u64) -> Vec<Vec<f64>> {
    let (lb, ub) = problem.bounds();
    (0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, tags::GRADCHECK, i as u64);
            lb.iter()
                .zip(&ub)
                .map(|(l, u)| {
                    let (l, u) = (l.max(-1e3) + h, u.min(1e3) - h);
                    if u > l {
                        rng.random_range(l..u)
                    } else {
                        0.5 * (l + u)
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::sqp::NlpEval;
    use nalgebra::DMatrix;

    struct Quartic {
        wrong: bool,
    }

    impl NlpProblem for Quartic {
        fn dim(&self) -> usize {
            2
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![-1.0; 2], vec![1.0; 2])
        }
        fn evaluate(&self, x: &[f64]) -> NlpEval {
            let scale = if self.wrong { 1.01 } else { 1.0 };
            NlpEval {
                objective: x[0].powi(4) + x[0] * x[1],
                gradient: vec![4.0 * x[0].powi(3) * scale + x[1], x[0]],
                eq: vec![x[0].sin()],
                eq_jacobian: DMatrix::from_row_slice(1, 2, &[x[0].cos(), 0.0]),
                ineq: vec![],
                ineq_jacobian: DMatrix::zeros(0, 2),
            }
        }
    }

    #[test]
    fn correct_derivatives_pass() {
        let p = Quartic { wrong: false };
        let pts = random_points(&p, 10, 1e-5, 4);
        let r = check_derivatives(&p, &pts, 1e-5, 1e-5).unwrap();
        assert!(r.passed, "{}", r.max_relative_error);
    }

    #[test]
    fn wrong_derivatives_fail() {
        let p = Quartic { wrong: true };
        let pts = vec![vec![0.9, 0.1]];
        let r = check_derivatives(&p, &pts, 1e-5, 1e-5).unwrap();
        assert!(!r.passed);
    }
}
