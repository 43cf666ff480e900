//! Convex QCQP / SOCP front end.
//!
//! Problems are stated densely (they are small: at most a few hundred
//! variables) and handed to the Clarabel interior-point solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `‖M x + o‖₂ ≤ r`
#[derive(Debug, Clone)]
pub struct SocRow {
    pub matrix: DMatrix<f64>,
    pub offset: Vec<f64>,
    pub radius: f64,
}

/// `min ½ xᵀHx + cᵀx` subject to linear equalities, linear inequalities
/// `Gx ≤ h` and second-order-cone rows.
#[derive(Debug, Clone)]
pub struct ConvexQcqpSpec {
    pub hessian: DMatrix<f64>,
    pub linear: Vec<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: Vec<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: Vec<f64>,
    pub cones: Vec<SocRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct QcqpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    /// Largest violation of any supplied constraint at `x`.
    pub max_violation: f64,
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    pub iterations: u32,
}

impl ConvexQcqpSpec {
    /// Unconstrained problem with objective `½ xᵀHx + cᵀx`.
    pub fn new(hessian: DMatrix<f64>, linear: Vec<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: vec![],
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: vec![],
            cones: vec![],
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn with_inequalities(mut self, g: DMatrix<f64>, h: Vec<f64>) -> Self {
        self.ineq_matrix = g;
        self.ineq_rhs = h;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: Vec<f64>) -> Self {
        self.eq_matrix = a;
        self.eq_rhs = b;
        self
    }

    pub fn with_cones(mut self, cones: Vec<SocRow>) -> Self {
        self.cones = cones;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.hessian.shape() != (n, n) {
            return Err(Error::invalid("objective matrix has wrong shape"));
        }
        if self.eq_matrix.ncols() != n || self.eq_matrix.nrows() != self.eq_rhs.len() {
            return Err(Error::invalid("equality block has wrong shape"));
        }
        if self.ineq_matrix.ncols() != n || self.ineq_matrix.nrows() != self.ineq_rhs.len() {
            return Err(Error::invalid("inequality block has wrong shape"));
        }
        for c in &self.cones {
            if c.matrix.ncols() != n || c.matrix.nrows() != c.offset.len() {
                return Err(Error::invalid("cone row has wrong shape"));
            }
            if !(c.radius >= 0.0) {
                return Err(Error::invalid("cone radius must be nonnegative"));
            }
        }
        if (&self.hessian - self.hessian.transpose()).amax() > 1e-9 * (1.0 + self.hessian.amax()) {
            return Err(Error::invalid("objective matrix is not symmetric"));
        }
        let all_finite = self.hessian.iter().chain(&self.linear).all(|v| v.is_finite())
            && self.eq_matrix.iter().chain(&self.eq_rhs).all(|v| v.is_finite())
            && self.ineq_matrix.iter().all(|v| v.is_finite())
            && self.ineq_rhs.iter().all(|v| !v.is_nan())
            && self
                .cones
                .iter()
                .all(|c| c.matrix.iter().chain(&c.offset).all(|v| v.is_finite()) && c.radius.is_finite());
        if !all_finite {
            return Err(Error::invalid("problem data is not finite"));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let xv = nalgebra::DVector::from_column_slice(x);
        0.5 * (xv.transpose() * &self.hessian * &xv)[(0, 0)]
            + self.linear.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let xv = nalgebra::DVector::from_column_slice(x);
        let mut worst = 0.0f64;
        let e = &self.eq_matrix * &xv;
        for (v, b) in e.iter().zip(&self.eq_rhs) {
            worst = worst.max((v - b).abs());
        }
        let g = &self.ineq_matrix * &xv;
        for (v, h) in g.iter().zip(&self.ineq_rhs) {
            worst = worst.max(v - h);
        }
        for c in &self.cones {
            let r = &c.matrix * &xv;
            let norm = r.iter().zip(&c.offset).map(|(a, o)| (a + o) * (a + o)).sum::<f64>().sqrt();
            worst = worst.max(norm - c.radius);
        }
        worst.max(0.0)
    }
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    fn new() -> Self {
        Self {
            rows: vec![],
            cols: vec![],
            vals: vec![],
        }
    }

    fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
    }

    fn into_csc(self, m: usize, n: usize) -> CscMatrix<f64> {
        CscMatrix::new_from_triplets(m, n, self.rows, self.cols, self.vals)
    }
}

/// Solves a convex QCQP to the requested feasibility tolerance.
pub fn solve_convex_qcqp(spec: &ConvexQcqpSpec, tol: f64) -> Result<QcqpSolution> {
    spec.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let n = spec.dim();

    let mut p = Triplets::new();
    for c in 0..n {
        for r in 0..=c {
            p.push(r, c, 0.5 * (spec.hessian[(r, c)] + spec.hessian[(c, r)]));
        }
    }

    let mut a = Triplets::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut row = 0;
    let n_eq = spec.eq_rhs.len();
    for i in 0..n_eq {
        for j in 0..n {
            a.push(row, j, spec.eq_matrix[(i, j)]);
        }
        b.push(spec.eq_rhs[i]);
        row += 1;
    }
    if n_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(n_eq));
    }
    // rows with +inf right-hand side carry no information
    let active_ineq: Vec<usize> = (0..spec.ineq_rhs.len())
        .filter(|&i| spec.ineq_rhs[i] < f64::INFINITY)
        .collect();
    for &i in &active_ineq {
        if spec.ineq_rhs[i] == f64::NEG_INFINITY {
            return Ok(infeasible(spec, n));
        }
        for j in 0..n {
            a.push(row, j, spec.ineq_matrix[(i, j)]);
        }
        b.push(spec.ineq_rhs[i]);
        row += 1;
    }
    if !active_ineq.is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(active_ineq.len()));
    }
    for c in &spec.cones {
        b.push(c.radius);
        row += 1;
        for k in 0..c.offset.len() {
            for j in 0..n {
                a.push(row, j, -c.matrix[(k, j)]);
            }
            b.push(c.offset[k]);
            row += 1;
        }
        cones.push(SupportedConeT::SecondOrderConeT(c.offset.len() + 1));
    }

    let pm = p.into_csc(n, n);
    let am = a.into_csc(row, n);
    let inner = (tol * 1e-2).min(1e-8);
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .tol_gap_abs(inner)
        .tol_gap_rel(inner)
        .tol_feas(inner)
        .build()
        .map_err(|e| Error::Solver(format!("settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&pm, &spec.linear, &am, &b, &cones, settings)
        .map_err(|e| Error::Solver(format!("setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let x = sol.x.clone();
    let max_violation = spec.max_violation(&x);
    let mut ineq_duals = vec![0.0; spec.ineq_rhs.len()];
    for (k, &i) in active_ineq.iter().enumerate() {
        ineq_duals[i] = sol.z[n_eq + k];
    }
    let eq_duals = sol.z[..n_eq].to_vec();
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::MaxIter,
        SolverStatus::AlmostSolved | SolverStatus::InsufficientProgress | SolverStatus::NumericalError
            if x.iter().all(|v| v.is_finite()) =>
        {
            if max_violation <= tol {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIter
            }
        }
        other => {
            return Err(Error::Solver(format!(
                "conic solver stopped with {other:?} after {} iterations (primal residual {:.3e}, dual residual {:.3e}, violation {:.3e})",
                sol.iterations, sol.r_prim, sol.r_dual, max_violation
            )))
        }
    };
    Ok(QcqpSolution {
        objective: spec.objective(&x),
        x,
        status,
        max_violation,
        eq_duals,
        ineq_duals,
        iterations: sol.iterations,
    })
}

fn infeasible(spec: &ConvexQcqpSpec, n: usize) -> QcqpSolution {
    QcqpSolution {
        x: vec![0.0; n],
        objective: f64::NAN,
        status: SolveStatus::Infeasible,
        max_violation: f64::INFINITY,
        eq_duals: vec![0.0; spec.eq_rhs.len()],
        ineq_duals: vec![0.0; spec.ineq_rhs.len()],
        iterations: 0,
    }
}
