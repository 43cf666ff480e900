use nalgebra::DMatrix;

use super::cost::{AuxCost, EconomicCost};
use super::model::Model;
use super::terminal::TerminalIngredients;
use crate::error::{Error, Result};
use crate::sets::BoxSet;
use crate::solvers::{solve_nlp, NlpEval, NlpProblem, SolveStatus, SqpOptions, SqpResult};

/// Everything that defines the constraint set of both FHOCPs at one step.
#[derive(Clone, Copy)]
pub struct HorizonSetup<'a> {
    pub model: &'a dyn Model,
    pub aux: &'a AuxCost,
    pub terminal: &'a TerminalIngredients,
    /// `Z̄_0 … Z̄_{N-1}` over `(x, u)`.
    pub boxes: &'a [BoxSet],
}

impl HorizonSetup<'_> {
    pub fn horizon(&self) -> usize {
        self.boxes.len()
    }

    fn n(&self) -> usize {
        self.model.state_dim()
    }

    fn m(&self) -> usize {
        self.model.input_dim()
    }

    pub fn input_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n(), self.m());
        let mut lb = Vec::with_capacity(m * self.horizon());
        let mut ub = Vec::with_capacity(m * self.horizon());
        for b in self.boxes {
            lb.extend_from_slice(&b.lower[n..n + m]);
            ub.extend_from_slice(&b.upper[n..n + m]);
        }
        (lb, ub)
    }

    /// Any stage box flagged empty makes both problems infeasible.
    pub fn has_empty_stage(&self) -> bool {
        self.boxes.iter().any(|b| b.empty)
    }

    /// Predicted states `x_0 … x_N`.
    pub fn rollout(&self, x0: &[f64], u: &[f64]) -> Vec<Vec<f64>> {
        let m = self.m();
        let mut xs = Vec::with_capacity(self.horizon() + 1);
        xs.push(x0.to_vec());
        for i in 0..self.horizon() {
            let next = self.model.step(&xs[i], &u[i * m..(i + 1) * m]);
            xs.push(next);
        }
        xs
    }

    fn rollout_sens(&self, x0: &[f64], u: &[f64]) -> (Vec<Vec<f64>>, Vec<DMatrix<f64>>) {
        let (n, m, big_n) = (self.n(), self.m(), self.horizon());
        let mut xs = Vec::with_capacity(big_n + 1);
        let mut sens = Vec::with_capacity(big_n + 1);
        xs.push(x0.to_vec());
        sens.push(DMatrix::zeros(n, big_n * m));
        for i in 0..big_n {
            let (next, a, b) = self.model.step_jacobian(&xs[i], &u[i * m..(i + 1) * m]);
            let mut s = &a * &sens[i];
            {
                let mut block = s.view_mut((0, i * m), (n, m));
                block += &b;
            }
            xs.push(next);
            sens.push(s);
        }
        (xs, sens)
    }

    pub fn aux_value(&self, xs: &[Vec<f64>], u: &[f64]) -> f64 {
        let m = self.m();
        let big_n = self.horizon();
        (0..big_n)
            .map(|i| self.aux.stage(&xs[i], &u[i * m..(i + 1) * m]))
            .sum::<f64>()
            + self.aux.terminal(&xs[big_n])
    }

    /// `J_a(x_0, u)`
    pub fn aux_cost(&self, x0: &[f64], u: &[f64]) -> f64 {
        self.aux_value(&self.rollout(x0, u), u)
    }

    /// `J_e(x_0, u)`
    pub fn economic_cost(&self, cost: &dyn EconomicCost, x0: &[f64], u: &[f64]) -> f64 {
        let m = self.m();
        let xs = self.rollout(x0, u);
        (0..self.horizon())
            .map(|i| cost.eval(&xs[i], &u[i * m..(i + 1) * m]))
            .sum()
    }

    /// Stage state constraints (`i = 1 … N-1`) followed by the terminal
    /// constraint, all in `g ≤ 0` form.
    fn constraint_values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        let n = self.n();
        let mut g = Vec::new();
        for i in 1..self.horizon() {
            let b = &self.boxes[i];
            for c in 0..n {
                if b.upper[c].is_finite() {
                    g.push(xs[i][c] - b.upper[c]);
                }
                if b.lower[c].is_finite() {
                    g.push(b.lower[c] - xs[i][c]);
                }
            }
        }
        g.push(self.aux.terminal(&xs[self.horizon()]) - self.terminal.alpha_n);
        g
    }

    fn constraint_jacobian(&self, xs: &[Vec<f64>], sens: &[DMatrix<f64>]) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut rows = Vec::new();
        for i in 1..self.horizon() {
            let b = &self.boxes[i];
            for c in 0..n {
                let row: Vec<f64> = sens[i].row(c).iter().copied().collect();
                if b.upper[c].is_finite() {
                    rows.push(row.clone());
                }
                if b.lower[c].is_finite() {
                    rows.push(row.iter().map(|v| -v).collect());
                }
            }
        }
        let big_n = self.horizon();
        let mut ge = vec![0.0; n];
        self.aux.terminal_gradient(&xs[big_n], &mut ge);
        rows.push(chain(&ge, &sens[big_n]));
        rows
    }

    /// Largest violation of the stage, terminal and input constraints for a
    /// given input sequence.
    pub fn violation(&self, x0: &[f64], u: &[f64]) -> f64 {
        let xs = self.rollout(x0, u);
        let (lb, ub) = self.input_bounds();
        let input = u
            .iter()
            .zip(lb.iter().zip(&ub))
            .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
            .fold(0.0, f64::max);
        self.constraint_values(&xs)
            .into_iter()
            .fold(input, |acc, g| acc.max(g))
    }

    /// Gradient of `J_a` with respect to the input sequence.
    fn aux_gradient(&self, xs: &[Vec<f64>], sens: &[DMatrix<f64>], u: &[f64]) -> (f64, Vec<f64>) {
        let (n, m, big_n) = (self.n(), self.m(), self.horizon());
        let mut grad = vec![0.0; big_n * m];
        let mut gx = vec![0.0; n];
        let mut gu = vec![0.0; m];
        let mut value = 0.0;
        for i in 0..big_n {
            value += self.aux.stage_gradient(&xs[i], &u[i * m..(i + 1) * m], &mut gx, &mut gu);
            add_chain(&mut grad, &gx, &sens[i]);
            for c in 0..m {
                grad[i * m + c] += gu[c];
            }
        }
        value += self.aux.terminal_gradient(&xs[big_n], &mut gx);
        add_chain(&mut grad, &gx, &sens[big_n]);
        (value, grad)
    }

    fn economic_gradient(
        &self,
        cost: &dyn EconomicCost,
        xs: &[Vec<f64>],
        sens: &[DMatrix<f64>],
        u: &[f64],
    ) -> (f64, Vec<f64>) {
        let (n, m, big_n) = (self.n(), self.m(), self.horizon());
        let mut grad = vec![0.0; big_n * m];
        let mut gx = vec![0.0; n];
        let mut gu = vec![0.0; m];
        let mut value = 0.0;
        for i in 0..big_n {
            value += cost.gradient(&xs[i], &u[i * m..(i + 1) * m], &mut gx, &mut gu);
            add_chain(&mut grad, &gx, &sens[i]);
            for c in 0..m {
                grad[i * m + c] += gu[c];
            }
        }
        (value, grad)
    }
}

fn chain(g: &[f64], sens: &DMatrix<f64>) -> Vec<f64> {
    let mut out = vec![0.0; sens.ncols()];
    add_chain(&mut out, g, sens);
    out
}

fn add_chain(out: &mut [f64], g: &[f64], sens: &DMatrix<f64>) {
    for (col, o) in out.iter_mut().enumerate() {
        *o += (0..g.len()).map(|r| g[r] * sens[(r, col)]).sum::<f64>();
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c])
}

/// The stabilizing problem (`min J_a`) or the economic problem
/// (`min J_e` with `J_a ≤ Π`) at a measured state.
pub struct FhocpProblem<'a> {
    pub setup: HorizonSetup<'a>,
    pub x0: Vec<f64>,
    pub economic: Option<(&'a dyn EconomicCost, f64)>,
}

impl NlpProblem for FhocpProblem<'_> {
    fn dim(&self) -> usize {
        self.setup.horizon() * self.setup.m()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.setup.input_bounds()
    }

    fn evaluate(&self, u: &[f64]) -> NlpEval {
        let (xs, sens) = self.setup.rollout_sens(&self.x0, u);
        let mut ineq = self.setup.constraint_values(&xs);
        let mut rows = self.setup.constraint_jacobian(&xs, &sens);
        let (objective, gradient) = match self.economic {
            None => self.setup.aux_gradient(&xs, &sens, u),
            Some((cost, pi)) => {
                let (ja, ga) = self.setup.aux_gradient(&xs, &sens, u);
                ineq.push(ja - pi);
                rows.push(ga);
                self.setup.economic_gradient(cost, &xs, &sens, u)
            }
        };
        let dim = u.len();
        NlpEval {
            objective,
            gradient,
            eq: Vec::new(),
            eq_jacobian: DMatrix::zeros(0, dim),
            ineq_jacobian: rows_to_matrix(&rows, dim),
            ineq,
        }
    }

    fn values(&self, u: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let xs = self.setup.rollout(&self.x0, u);
        let mut ineq = self.setup.constraint_values(&xs);
        let m = self.setup.m();
        let objective = match self.economic {
            None => self.setup.aux_value(&xs, u),
            Some((cost, pi)) => {
                ineq.push(self.setup.aux_value(&xs, u) - pi);
                (0..self.setup.horizon())
                    .map(|i| cost.eval(&xs[i], &u[i * m..(i + 1) * m]))
                    .sum()
            }
        };
        (objective, Vec::new(), ineq)
    }
}

#[derive(Debug, Clone)]
pub struct FhocpSolution {
    pub inputs: Vec<f64>,
    pub objective: f64,
    /// `J_a` at `inputs`; equals `objective` for the stabilizing problem.
    pub aux_value: f64,
    pub status: SolveStatus,
    pub max_violation: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub trace: Vec<crate::solvers::SqpIterate>,
}

fn empty_stage_result(dim: usize) -> FhocpSolution {
    FhocpSolution {
        inputs: vec![f64::NAN; dim],
        objective: f64::NAN,
        aux_value: f64::NAN,
        status: SolveStatus::Infeasible,
        max_violation: f64::INFINITY,
        kkt_residual: f64::INFINITY,
        iterations: 0,
        trace: Vec::new(),
    }
}

fn finish(setup: &HorizonSetup, x0: &[f64], r: SqpResult, economic: Option<&dyn EconomicCost>) -> FhocpSolution {
    let aux_value = setup.aux_cost(x0, &r.x);
    let objective = match economic {
        Some(c) => setup.economic_cost(c, x0, &r.x),
        None => aux_value,
    };
    FhocpSolution {
        max_violation: setup.violation(x0, &r.x).max(r.max_violation),
        inputs: r.x,
        objective,
        aux_value,
        status: r.status,
        kkt_residual: r.kkt_residual,
        iterations: r.iterations,
        trace: r.trace,
    }
}

fn check_inputs(setup: &HorizonSetup, x0: &[f64], warm: &[f64]) -> Result<()> {
    if x0.len() != setup.n() || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial state must be finite with the model's state dimension"));
    }
    if warm.len() != setup.horizon() * setup.m() {
        return Err(Error::invalid("warm start length must be N·m"));
    }
    Ok(())
}

/// `V_a*(x_k) = min J_a` over the nominal, terminal and input constraints.
pub fn solve_stabilizing_fhocp(
    setup: &HorizonSetup,
    x0: &[f64],
    warm: &[f64],
    options: &SqpOptions,
) -> Result<FhocpSolution> {
    check_inputs(setup, x0, warm)?;
    if setup.has_empty_stage() {
        return Ok(empty_stage_result(warm.len()));
    }
    let problem = FhocpProblem {
        setup: *setup,
        x0: x0.to_vec(),
        economic: None,
    };
    let r = solve_nlp(&problem, warm, options)?;
    Ok(finish(setup, x0, r, None))
}

/// `V_e*(x_k) = min J_e` subject to the same constraints plus `J_a ≤ Π`.
pub fn solve_economic_fhocp(
    setup: &HorizonSetup,
    cost: &dyn EconomicCost,
    x0: &[f64],
    pi: f64,
    warm: &[f64],
    options: &SqpOptions,
) -> Result<FhocpSolution> {
    check_inputs(setup, x0, warm)?;
    if !pi.is_finite() {
        return Err(Error::invalid("contraction bound must be finite"));
    }
    if setup.has_empty_stage() {
        return Ok(empty_stage_result(warm.len()));
    }
    let problem = FhocpProblem {
        setup: *setup,
        x0: x0.to_vec(),
        economic: Some((cost, pi)),
    };
    let r = solve_nlp(&problem, warm, options)?;
    let mut sol = finish(setup, x0, r, Some(cost));
    sol.max_violation = sol.max_violation.max(sol.aux_value - pi);
    Ok(sol)
}
