use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plants::Normalization;
use crate::sets::BoxSet;

/// Economic stage cost `L_e(x, u)` with its gradient.
pub trait EconomicCost: Sync {
    fn eval(&self, x: &[f64], u: &[f64]) -> f64;
    /// Writes `∂L_e/∂x` and `∂L_e/∂u` and returns `L_e`.
    fn gradient(&self, x: &[f64], u: &[f64], gx: &mut [f64], gu: &mut [f64]) -> f64;
}

/// `(x-x_r)ᵀQ(x-x_r) + (u-u_r)ᵀR(u-u_r) + g_xᵀx + g_uᵀu + c`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub x_ref: Vec<f64>,
    pub u_ref: Vec<f64>,
    pub x_linear: Vec<f64>,
    pub u_linear: Vec<f64>,
    pub constant: f64,
}

impl QuadraticCost {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, x_ref: Vec<f64>, u_ref: Vec<f64>) -> Self {
        let (n, m) = (x_ref.len(), u_ref.len());
        Self {
            q,
            r,
            x_ref,
            u_ref,
            x_linear: vec![0.0; n],
            u_linear: vec![0.0; m],
            constant: 0.0,
        }
    }

    /// Reactor cost `(T_r - input_offset) + (T - 345)²` written over
    /// normalized `(x, u)` so that values come out in original units.
    pub fn cstr(norm: &Normalization, input_offset: f64) -> Self {
        let (o_t, s_t) = (norm.offset[1], norm.scale[1]);
        let (o_u, s_u) = (norm.offset[3], norm.scale[3]);
        let mut q = DMatrix::zeros(3, 3);
        q[(1, 1)] = s_t * s_t;
        Self {
            q,
            r: DMatrix::zeros(1, 1),
            x_ref: vec![0.0, (345.0 - o_t) / s_t, 0.0],
            u_ref: vec![0.0],
            x_linear: vec![0.0; 3],
            u_linear: vec![s_u],
            constant: o_u - input_offset,
        }
    }
}

fn quad_grad(m: &DMatrix<f64>, v: &[f64], reference: &[f64], g: &mut [f64]) -> f64 {
    let d: Vec<f64> = v.iter().zip(reference).map(|(a, b)| a - b).collect();
    let mut val = 0.0;
    for r in 0..d.len() {
        let mut row = 0.0;
        for c in 0..d.len() {
            row += m[(r, c)] * d[c];
        }
        val += d[r] * row;
    }
    for r in 0..d.len() {
        g[r] = (0..d.len()).map(|c| (m[(r, c)] + m[(c, r)]) * d[c]).sum();
    }
    val
}

fn quad(m: &DMatrix<f64>, v: &[f64], reference: &[f64]) -> f64 {
    let d: Vec<f64> = v.iter().zip(reference).map(|(a, b)| a - b).collect();
    let mut val = 0.0;
    for r in 0..d.len() {
        for c in 0..d.len() {
            val += d[r] * m[(r, c)] * d[c];
        }
    }
    val
}

impl EconomicCost for QuadraticCost {
    fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        quad(&self.q, x, &self.x_ref)
            + quad(&self.r, u, &self.u_ref)
            + self.x_linear.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            + self.u_linear.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()
            + self.constant
    }

    fn gradient(&self, x: &[f64], u: &[f64], gx: &mut [f64], gu: &mut [f64]) -> f64 {
        let mut v = quad_grad(&self.q, x, &self.x_ref, gx) + quad_grad(&self.r, u, &self.u_ref, gu);
        for i in 0..x.len() {
            gx[i] += self.x_linear[i];
            v += self.x_linear[i] * x[i];
        }
        for i in 0..u.len() {
            gu[i] += self.u_linear[i];
            v += self.u_linear[i] * u[i];
        }
        v + self.constant
    }
}

/// Quadratic auxiliary costs centred at the steady pair:
/// `L_a = x̄ᵀQx̄ + ūᵀRū`, `E_a = x̄ᵀPx̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxCost {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub x_s: Vec<f64>,
    pub u_s: Vec<f64>,
    /// Lipschitz constant of `L_a` in `x` over the constraint box.
    pub c_l: f64,
    /// Lipschitz constant of `E_a` over the terminal region `X_p`.
    pub c_e: f64,
    pub la_max: f64,
    pub ea_max: f64,
}

pub(crate) fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= 1e-9 * m.amax().max(1.0) && m.clone().cholesky().is_some()
}

pub(crate) fn lambda_max(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.max()
}

impl AuxCost {
    /// Builds the auxiliary costs and their box constants over `region`
    /// (a box over `(x, u)`). `c_e` starts at zero and is set once the
    /// terminal region is known.
    pub fn new(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        p: DMatrix<f64>,
        x_s: Vec<f64>,
        u_s: Vec<f64>,
        region: &BoxSet,
    ) -> Result<Self> {
        let n = x_s.len();
        let m = u_s.len();
        if q.shape() != (n, n) || p.shape() != (n, n) || r.shape() != (m, m) {
            return Err(Error::invalid("auxiliary weight shapes do not match the state/input dimensions"));
        }
        if !is_positive_definite(&q) || !is_positive_definite(&r) || !is_positive_definite(&p) {
            return Err(Error::invalid("Q, R and P must be symmetric positive definite"));
        }
        if region.dim() != n + m {
            return Err(Error::invalid("region dimension does not match (x, u)"));
        }
        let mut aux = Self {
            q,
            r,
            p,
            x_s,
            u_s,
            c_l: 0.0,
            c_e: 0.0,
            la_max: 0.0,
            ea_max: 0.0,
        };
        let states = region.slice(0..n);
        let inputs = region.slice(n..n + m);
        // convex quadratics attain their box maxima at vertices
        let mut c_l = 0.0f64;
        let mut ea_max = 0.0f64;
        let mut lx_max = 0.0f64;
        for x in states.corners() {
            let d = DVector::from_iterator(n, x.iter().zip(&aux.x_s).map(|(a, b)| a - b));
            c_l = c_l.max(((&aux.q + aux.q.transpose()) * &d).norm());
            ea_max = ea_max.max(aux.terminal(&x));
            lx_max = lx_max.max(quad(&aux.q, &x, &aux.x_s));
        }
        let lu_max = inputs
            .corners()
            .iter()
            .map(|u| quad(&aux.r, u, &aux.u_s))
            .fold(0.0, f64::max);
        aux.c_l = c_l;
        aux.ea_max = ea_max;
        aux.la_max = lx_max + lu_max;
        Ok(aux)
    }

    pub fn stage(&self, x: &[f64], u: &[f64]) -> f64 {
        quad(&self.q, x, &self.x_s) + quad(&self.r, u, &self.u_s)
    }

    pub fn stage_gradient(&self, x: &[f64], u: &[f64], gx: &mut [f64], gu: &mut [f64]) -> f64 {
        quad_grad(&self.q, x, &self.x_s, gx) + quad_grad(&self.r, u, &self.u_s, gu)
    }

    pub fn terminal(&self, x: &[f64]) -> f64 {
        quad(&self.p, x, &self.x_s)
    }

    pub fn terminal_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        quad_grad(&self.p, x, &self.x_s, g)
    }

    /// `max ‖∇E_a‖` over `{E_a ≤ level}`: `2·sqrt(level·λ_max(P))`.
    pub fn terminal_lipschitz(&self, level: f64) -> f64 {
        2.0 * (level.max(0.0) * lambda_max(&self.p)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_matches_differences() {
        let c = QuadraticCost {
            q: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.1, 1.0]),
            r: DMatrix::from_element(1, 1, 3.0),
            x_ref: vec![0.2, -0.1],
            u_ref: vec![0.4],
            x_linear: vec![1.0, -2.0],
            u_linear: vec![0.5],
            constant: 7.0,
        };
        let (x, u) = ([0.3, 0.9], [0.1]);
        let (mut gx, mut gu) = ([0.0; 2], [0.0; 1]);
        let v = c.gradient(&x, &u, &mut gx, &mut gu);
        assert!((v - c.eval(&x, &u)).abs() < 1e-14);
        let h = 1e-6;
        for i in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[i] += h;
            xm[i] -= h;
            let fd = (c.eval(&xp, &u) - c.eval(&xm, &u)) / (2.0 * h);
            assert!((fd - gx[i]).abs() < 1e-7);
        }
        let fd = (c.eval(&x, &[u[0] + h]) - c.eval(&x, &[u[0] - h])) / (2.0 * h);
        assert!((fd - gu[0]).abs() < 1e-7);
    }

    #[test]
    fn cstr_cost_in_original_units() {
        let region = BoxSet::new(vec![0.2, 300.0, 280.0, 280.0], vec![0.8, 370.0, 350.0, 360.0]).unwrap();
        let norm = Normalization::from_box(&region);
        let raw = [0.5, 350.0, 320.0, 330.0];
        let z = norm.normalize(&raw);
        let plain = QuadraticCost::cstr(&norm, 0.0);
        let expected = 330.0 + 25.0;
        assert!((plain.eval(&z[..3], &z[3..]) - expected).abs() < 1e-9);
        let shifted = QuadraticCost::cstr(&norm, 280.0);
        assert!((shifted.eval(&z[..3], &z[3..]) - (expected - 280.0)).abs() < 1e-9);
    }

    #[test]
    fn aux_constants_over_unit_box() {
        let region = BoxSet::unit(2);
        let aux = AuxCost::new(
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 3.0),
            vec![0.25],
            vec![0.5],
            &region,
        )
        .unwrap();
        assert_eq!(aux.stage(&[0.25], &[0.5]), 0.0);
        assert_eq!(aux.terminal(&[0.25]), 0.0);
        assert!((aux.c_l - 2.0 * 2.0 * 0.75).abs() < 1e-12);
        assert!((aux.la_max - (2.0 * 0.5625 + 0.25)).abs() < 1e-12);
        assert!((aux.ea_max - 3.0 * 0.5625).abs() < 1e-12);
        assert!((aux.terminal_lipschitz(0.12) - 2.0 * (0.36f64).sqrt()).abs() < 1e-12);
    }
}
