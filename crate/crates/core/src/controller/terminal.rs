use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::{is_positive_definite, lambda_max};
use super::model::Model;
use super::steady::SteadyState;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, tags};
use crate::sets::BoxSet;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TerminalConfig {
    /// Points of the level set checked for each candidate level.
    pub samples: usize,
    /// `P = scale · P_riccati`; values above 1 leave a strict decrease margin.
    pub scale: f64,
    pub seed: u64,
    pub fd_step: f64,
    pub bisection_steps: usize,
    /// Also require every verified point to route to the steady state's cluster.
    #[serde(default)]
    pub require_home_cluster: bool,
}

impl Default for TerminalConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            scale: 1.2,
            seed: 0,
            fd_step: 1e-6,
            bisection_steps: 50,
            require_home_cluster: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TerminalIngredients {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// `K_f̂(x) = u_s + K (x - x_s)`
    pub gain: DMatrix<f64>,
    pub riccati: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub x_s: Vec<f64>,
    pub u_s: Vec<f64>,
    pub alpha_p: f64,
    pub alpha_n: f64,
    /// Smallest level into which `X_p` is mapped by the local law.
    pub alpha_n_min: f64,
    pub c_e: f64,
    /// Largest `μ̄` the horizon tolerates: `(α_p - α_N,min)/(c_E L^{N-1})`.
    pub admissible_mu_bar: f64,
    pub home_cluster: usize,
}

impl TerminalIngredients {
    pub fn feedback(&self, x: &[f64]) -> Vec<f64> {
        let d = DVector::from_iterator(x.len(), x.iter().zip(&self.x_s).map(|(a, b)| a - b));
        let k = &self.gain * d;
        self.u_s.iter().zip(k.iter()).map(|(a, b)| a + b).collect()
    }

    pub fn level(&self, x: &[f64]) -> f64 {
        let d = DVector::from_iterator(x.len(), x.iter().zip(&self.x_s).map(|(a, b)| a - b));
        d.dot(&(&self.p * &d))
    }
}

/// Central-difference Jacobians of the model at `(x, u)`.
pub fn linearize(model: &dyn Model, x: &[f64], u: &[f64], h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = x.len();
    let m = u.len();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    for j in 0..n {
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[j] += h;
        xm[j] -= h;
        let (fp, fm) = (model.step(&xp, u), model.step(&xm, u));
        for r in 0..n {
            a[(r, j)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    for j in 0..m {
        let (mut up, mut um) = (u.to_vec(), u.to_vec());
        up[j] += h;
        um[j] -= h;
        let (fp, fm) = (model.step(x, &up), model.step(x, &um));
        for r in 0..n {
            b[(r, j)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    (a, b)
}

/// Infinite-horizon discrete Riccati solution by value iteration.
/// Returns `(P, K)` with the optimal law `u = K x`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut p = q.clone();
    for _ in 0..200_000 {
        let s = r + b.transpose() * &p * b;
        let s_inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Solver("Riccati iteration produced a singular R + BᵀPB".into()))?;
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * &s_inv * b.transpose() * &p * a;
        let next = (&next + next.transpose()) * 0.5;
        if !next.iter().all(|v| v.is_finite()) {
            break;
        }
        let change = (&next - &p).amax();
        p = next;
        if change <= 1e-13 * p.amax().max(1.0) {
            let s = r + b.transpose() * &p * b;
            let k = -(s.try_inverse().expect("checked above") * b.transpose() * &p * a);
            return Ok((p, k));
        }
    }
    Err(Error::Solver("Riccati iteration did not converge; (A, B) may not be stabilizable".into()))
}

/// Fixed sample of the unit sphere (`surface`) or the unit ball.
fn unit_samples(dim: usize, count: usize, seed: u64, surface: bool) -> Vec<DVector<f64>> {
    let offset = if surface { 0 } else { count as u64 };
    (0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, tags::TERMINAL, offset + i as u64);
            let dir = loop {
                let v = DVector::from_iterator(dim, (0..dim).map(|_| gaussian(&mut rng)));
                let nrm = v.norm();
                if nrm > 1e-12 {
                    break v / nrm;
                }
            };
            let radius = if surface {
                1.0
            } else {
                rng.random::<f64>().powf(1.0 / dim as f64)
            };
            dir * radius
        })
        .collect()
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box–Muller
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct LevelCheck<'a> {
    model: &'a dyn Model,
    q: &'a DMatrix<f64>,
    r: &'a DMatrix<f64>,
    p: &'a DMatrix<f64>,
    gain: &'a DMatrix<f64>,
    x_s: &'a [f64],
    u_s: &'a [f64],
    /// `L⁻ᵀ` for `P = L Lᵀ`
    shape: DMatrix<f64>,
    /// Points of the unit sphere; the level check runs on the level set itself.
    surface: Vec<DVector<f64>>,
    /// Points of the unit ball, used for the image level.
    interior: Vec<DVector<f64>>,
    last_box: &'a BoxSet,
    home: Option<usize>,
}

impl LevelCheck<'_> {
    fn point(&self, level: f64, v: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let d = &self.shape * v * level.sqrt();
        let x: Vec<f64> = self.x_s.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
        let k = self.gain * &d;
        let u: Vec<f64> = self.u_s.iter().zip(k.iter()).map(|(a, b)| a + b).collect();
        (x, u)
    }

    fn quad(m: &DMatrix<f64>, v: &[f64], c: &[f64]) -> f64 {
        let d = DVector::from_iterator(v.len(), v.iter().zip(c).map(|(a, b)| a - b));
        d.dot(&(m * &d))
    }

    fn holds(&self, level: f64) -> bool {
        self.surface.par_iter().all(|v| {
            let (x, u) = self.point(level, v);
            let mut w = x.clone();
            w.extend_from_slice(&u);
            if !self.last_box.contains(&w) || self.home.is_some_and(|h| self.model.region_of(&x, &u) != h) {
                return false;
            }
            let next = self.model.step(&x, &u);
            let ea = Self::quad(self.p, &x, self.x_s);
            let la = Self::quad(self.q, &x, self.x_s) + Self::quad(self.r, &u, self.u_s);
            let lhs = Self::quad(self.p, &next, self.x_s) - ea + la;
            lhs <= 1e-9 * (ea + la) + 1e-14
        })
    }

    fn image_level(&self, level: f64) -> f64 {
        self.surface
            .par_iter()
            .chain(self.interior.par_iter())
            .map(|v| {
                let (x, u) = self.point(level, v);
                Self::quad(self.p, &self.model.step(&x, &u), self.x_s)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Local law, terminal weight and the levels `α_p`, `α_N`.
#[allow(clippy::too_many_arguments)]
pub fn design_terminal(
    model: &dyn Model,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    steady: &SteadyState,
    last_box: &BoxSet,
    lipschitz: f64,
    mu_bar: f64,
    horizon: usize,
    config: &TerminalConfig,
) -> Result<TerminalIngredients> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if !(config.scale >= 1.0) || config.samples == 0 {
        return Err(Error::invalid("terminal scale must be ≥ 1 and the sample count positive"));
    }
    if !is_positive_definite(q) || !is_positive_definite(r) {
        return Err(Error::invalid("Q and R must be symmetric positive definite"));
    }
    if last_box.empty {
        return Err(Error::BoundTooLarge(format!(
            "tightening by μ̄ = {mu_bar:.6} over {horizon} stages empties the last constraint set"
        )));
    }
    let (x_s, u_s) = (&steady.x, &steady.u);
    let n = x_s.len();
    let (a, b) = linearize(model, x_s, u_s, config.fd_step);
    let (riccati, gain) = solve_dare(&a, &b, q, r)?;
    let p = &riccati * config.scale;
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Solver("terminal weight is not positive definite".into()))?;
    let shape = chol
        .l()
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Solver("terminal weight factor is singular".into()))?;
    let home = model.region_of(x_s, u_s);
    let check = LevelCheck {
        model,
        q,
        r,
        p: &p,
        gain: &gain,
        x_s,
        u_s,
        shape,
        surface: unit_samples(n, config.samples, config.seed, true),
        interior: unit_samples(n, config.samples, config.seed, false),
        last_box,
        home: config.require_home_cluster.then_some(home),
    };

    // any level whose ellipsoid covers the whole state box is too large
    let widths: f64 = (0..n).map(|c| (last_box.upper[c] - last_box.lower[c]).powi(2)).sum();
    let mut hi = lambda_max(&p) * widths.max(1e-12) * 4.0;
    let alpha_p = if check.holds(hi) {
        hi
    } else {
        let mut lo = hi;
        let mut found = false;
        for _ in 0..200 {
            lo *= 0.5;
            if check.holds(lo) {
                found = true;
                break;
            }
            hi = lo;
        }
        if !found {
            return Err(Error::Infeasible {
                constraint: "terminal region".into(),
                detail: "no positive level satisfies the decrease and constraint conditions".into(),
            });
        }
        for _ in 0..config.bisection_steps {
            let mid = 0.5 * (lo + hi);
            if check.holds(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };

    let alpha_n_min = check.image_level(alpha_p);
    let c_e = 2.0 * (alpha_p * lambda_max(&p)).sqrt();
    let propagation = c_e * lipschitz.powi(horizon as i32 - 1);
    let admissible_mu_bar = if propagation > 0.0 {
        (alpha_p - alpha_n_min) / propagation
    } else {
        f64::INFINITY
    };
    let alpha_n = alpha_p - propagation * mu_bar;
    if !(alpha_n > 0.0) || alpha_n < alpha_n_min {
        return Err(Error::BoundTooLarge(format!(
            "μ̄ = {mu_bar:.6} needs c_E·L^(N-1)·μ̄ = {:.6} but only α_p - α_N,min = {:.6} is available \
             (α_p = {alpha_p:.6}, α_N,min = {alpha_n_min:.6}); admissible μ̄ ≤ {admissible_mu_bar:.6}",
            propagation * mu_bar,
            alpha_p - alpha_n_min
        )));
    }
    Ok(TerminalIngredients {
        a,
        b,
        gain,
        riccati,
        p,
        x_s: x_s.clone(),
        u_s: u_s.clone(),
        alpha_p,
        alpha_n,
        alpha_n_min,
        c_e,
        admissible_mu_bar,
        home_cluster: home,
    })
}
