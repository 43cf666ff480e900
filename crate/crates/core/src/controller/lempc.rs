use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::cost::{AuxCost, EconomicCost};
use super::fhocp::{solve_economic_fhocp, solve_stabilizing_fhocp, FhocpSolution, HorizonSetup};
use super::model::Model;
use super::steady::{compute_steady_state, SteadyState};
use super::terminal::{design_terminal, TerminalConfig, TerminalIngredients};
use super::tightening::{build_tightened_box, chi_constant, pi_init, pi_update, tightening_margin};
use crate::error::{Error, Result};
use crate::sets::BoxSet;
use crate::solvers::{SolveStatus, SqpOptions};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub horizon: usize,
    pub alpha: f64,
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
    pub terminal: TerminalConfig,
    pub steady_starts: usize,
    pub solver: SqpOptions,
    pub seed: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            horizon: 6,
            alpha: 0.97,
            q_diag: vec![0.5; 3],
            r_diag: vec![1.0],
            terminal: TerminalConfig::default(),
            steady_starts: 16,
            solver: SqpOptions::default(),
            seed: 0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid("α must lie in (0, 1]"));
        }
        if self.q_diag.iter().chain(&self.r_diag).any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("Q and R diagonals must be positive"));
        }
        Ok(())
    }
}

/// Offline ingredients of the controller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LempcDesign {
    pub horizon: usize,
    pub alpha: f64,
    pub lipschitz: f64,
    pub mu_bar: f64,
    pub steady: SteadyState,
    pub margins: Vec<f64>,
    pub boxes: Vec<BoxSet>,
    pub terminal: TerminalIngredients,
    pub aux: AuxCost,
    pub chi: f64,
    pub pi0: f64,
}

/// Receding-horizon state carried between steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerState {
    pub k: usize,
    pub pi: f64,
    pub va_e_prev: Option<f64>,
    pub prev_inputs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLog {
    pub k: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub inputs: Vec<f64>,
    pub ve_star: f64,
    pub va_star: f64,
    pub va_e: f64,
    pub pi: f64,
    /// `E_a(x_k)`
    pub terminal_level: f64,
    /// `L_a(x_k, u_0*)`
    pub stage_aux: f64,
    pub candidate_feasible: Option<bool>,
    pub candidate_violation: Option<f64>,
    pub candidate_aux: Option<f64>,
    /// The stabilizing value came from the shifted candidate rather than the solver.
    pub va_from_candidate: bool,
    /// The economic solve was replaced by the stabilizing sequence.
    pub economic_fallback: bool,
    pub stabilizing_status: SolveStatus,
    pub economic_status: SolveStatus,
    pub stabilizing_seconds: f64,
    pub economic_seconds: f64,
    pub total_seconds: f64,
}

pub struct Lempc<'a> {
    pub model: &'a dyn Model,
    pub economic: &'a dyn EconomicCost,
    pub design: LempcDesign,
    pub options: SqpOptions,
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))
}

/// Stage boxes `Z̄_0 … Z̄_{N-1}` and their margins.
pub fn tightened_boxes(region: &BoxSet, state_dim: usize, horizon: usize, lipschitz: f64, mu_bar: f64) -> (Vec<f64>, Vec<BoxSet>) {
    (0..horizon)
        .map(|i| {
            (
                tightening_margin(i, lipschitz, mu_bar),
                build_tightened_box(region, state_dim, i, lipschitz, mu_bar),
            )
        })
        .unzip()
}

impl<'a> Lempc<'a> {
    /// Runs the offline design: steady state, tightening, terminal
    /// ingredients, `χ` and `Π₀`.
    pub fn design(
        model: &'a dyn Model,
        economic: &'a dyn EconomicCost,
        region: &BoxSet,
        lipschitz: f64,
        mu_bar: f64,
        config: &ControllerConfig,
    ) -> Result<Self> {
        config.validate()?;
        let n = model.state_dim();
        if config.q_diag.len() != n || config.r_diag.len() != model.input_dim() {
            return Err(Error::invalid("Q/R diagonals do not match the model dimensions"));
        }
        let steady = compute_steady_state(model, economic, region, config.steady_starts, config.seed, &config.solver)
            .map_err(|e| e.in_stage("steady state"))?;
        Self::with_steady_state(model, economic, region, lipschitz, mu_bar, config, steady)
    }

    /// Design around a given steady pair.
    pub fn with_steady_state(
        model: &'a dyn Model,
        economic: &'a dyn EconomicCost,
        region: &BoxSet,
        lipschitz: f64,
        mu_bar: f64,
        config: &ControllerConfig,
        steady: SteadyState,
    ) -> Result<Self> {
        config.validate()?;
        if !(lipschitz >= 0.0) || !(mu_bar >= 0.0) {
            return Err(Error::invalid("L and μ̄ must be nonnegative"));
        }
        let n = model.state_dim();
        let (q, r) = (diag(&config.q_diag), diag(&config.r_diag));
        let (margins, boxes) = tightened_boxes(region, n, config.horizon, lipschitz, mu_bar);
        let terminal = design_terminal(
            model,
            &q,
            &r,
            &steady,
            &boxes[config.horizon - 1],
            lipschitz,
            mu_bar,
            config.horizon,
            &config.terminal,
        )
        .map_err(|e| e.in_stage("terminal design"))?;
        let mut aux = AuxCost::new(q, r, terminal.p.clone(), steady.x.clone(), steady.u.clone(), region)?;
        aux.c_e = terminal.c_e;
        let chi = chi_constant(aux.c_e, aux.c_l, lipschitz, config.horizon);
        let pi0 = pi_init(aux.la_max, aux.ea_max, config.horizon);
        Ok(Self {
            model,
            economic,
            design: LempcDesign {
                horizon: config.horizon,
                alpha: config.alpha,
                lipschitz,
                mu_bar,
                steady,
                margins,
                boxes,
                terminal,
                aux,
                chi,
                pi0,
            },
            options: config.solver.clone(),
        })
    }

    pub fn setup(&self) -> HorizonSetup<'_> {
        HorizonSetup {
            model: self.model,
            aux: &self.design.aux,
            terminal: &self.design.terminal,
            boxes: &self.design.boxes,
        }
    }

    pub fn initial_state(&self) -> ControllerState {
        ControllerState {
            k: 0,
            pi: self.design.pi0,
            va_e_prev: None,
            prev_inputs: None,
        }
    }

    fn m(&self) -> usize {
        self.model.input_dim()
    }

    /// Previous economic sequence shifted by one with the local law appended
    /// at the candidate's own `x_{N-1|k}`.
    pub fn shifted_candidate(&self, prev: &[f64], x: &[f64]) -> Vec<f64> {
        let m = self.m();
        let big_n = self.design.horizon;
        let mut cand = prev[m..].to_vec();
        let mut state = x.to_vec();
        for i in 0..big_n - 1 {
            state = self.model.step(&state, &cand[i * m..(i + 1) * m]);
        }
        cand.extend(self.design.terminal.feedback(&state));
        cand
    }

    fn clamp_inputs(&self, u: &[f64]) -> Vec<f64> {
        let (lb, ub) = self.setup().input_bounds();
        u.iter()
            .zip(lb.iter().zip(&ub))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect()
    }

    /// Warm starts tried in order when no shifted candidate is available.
    fn cold_starts(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let m = self.m();
        let big_n = self.design.horizon;
        let (lb, ub) = self.setup().input_bounds();
        let mut feedback = Vec::with_capacity(big_n * m);
        let mut state = x.to_vec();
        for i in 0..big_n {
            let u: Vec<f64> = self
                .design
                .terminal
                .feedback(&state)
                .iter()
                .enumerate()
                .map(|(c, v)| v.clamp(lb[i * m + c], ub[i * m + c]))
                .collect();
            state = self.model.step(&state, &u);
            feedback.extend(u);
        }
        let steady: Vec<f64> = (0..big_n).flat_map(|_| self.design.steady.u.clone()).collect();
        let mid: Vec<f64> = lb.iter().zip(&ub).map(|(l, h)| 0.5 * (l + h)).collect();
        vec![feedback, self.clamp_inputs(&steady), lb, ub, mid]
    }

    fn feasible(&self, sol: &FhocpSolution) -> bool {
        sol.status != SolveStatus::Infeasible
            && sol.inputs.iter().all(|v| v.is_finite())
            && sol.max_violation <= self.options.tol
    }

    /// One pass of the receding-horizon loop at measured state `x`.
    pub fn step(&self, state: &mut ControllerState, x: &[f64]) -> Result<StepLog> {
        let start = Instant::now();
        let k = state.k;
        let setup = self.setup();
        let tol = self.options.tol;
        let fail = |problem: &str, detail: String| Error::StepFailed {
            step: k,
            problem: problem.into(),
            detail,
        };

        // shifted candidate
        let candidate = state.prev_inputs.as_ref().map(|prev| {
            let cand = self.shifted_candidate(prev, x);
            let viol = setup.violation(x, &cand);
            let ja = setup.aux_cost(x, &cand);
            (cand, viol, ja)
        });

        // stabilizing problem
        let t_stab = Instant::now();
        let mut warm_list = Vec::new();
        if let Some((cand, _, _)) = &candidate {
            warm_list.push(self.clamp_inputs(cand));
        }
        warm_list.extend(self.cold_starts(x));
        let mut stab: Option<FhocpSolution> = None;
        let mut last_status = SolveStatus::Infeasible;
        let mut worst = f64::INFINITY;
        for warm in &warm_list {
            let sol = solve_stabilizing_fhocp(&setup, x, warm, &self.options)
                .map_err(|e| fail("stabilizing", e.to_string()))?;
            last_status = sol.status;
            worst = worst.min(sol.max_violation);
            if self.feasible(&sol) {
                stab = Some(sol);
                break;
            }
        }
        let stabilizing_seconds = t_stab.elapsed().as_secs_f64();

        let cand_ok = candidate.as_ref().filter(|(_, viol, _)| *viol <= tol);
        let (ua, va_star, va_from_candidate, stab_status) = match (&stab, cand_ok) {
            (Some(s), Some((c, _, ja))) if *ja < s.aux_value => (c.clone(), *ja, true, s.status),
            (Some(s), _) => (s.inputs.clone(), s.aux_value, false, s.status),
            (None, Some((c, _, ja))) => (c.clone(), *ja, true, last_status),
            (None, None) => {
                return Err(fail(
                    "stabilizing",
                    format!("no feasible input sequence found (smallest violation {worst:.3e})"),
                ))
            }
        };

        // contraction bound
        let pi = match state.va_e_prev {
            Some(prev) if k > 0 => pi_update(va_star, prev, self.design.alpha, self.design.mu_bar, self.design.chi),
            _ => self.design.pi0,
        };

        // economic problem
        let t_econ = Instant::now();
        let pi_solve = if pi - 1e-7 >= va_star { pi - 1e-7 } else { pi };
        let econ = solve_economic_fhocp(&setup, self.economic, x, pi_solve, &ua, &self.options)
            .map_err(|e| fail("economic", e.to_string()))?;
        let economic_seconds = t_econ.elapsed().as_secs_f64();
        let ua_cost = setup.economic_cost(self.economic, x, &ua);
        let econ_ok = self.feasible(&econ) && econ.aux_value <= pi + tol;
        let ua_ok = va_star <= pi + tol;
        let (inputs, ve_star, va_e, economic_fallback) = match (econ_ok, ua_ok) {
            (true, true) if ua_cost < econ.objective => (ua.clone(), ua_cost, va_star, true),
            (true, _) => (econ.inputs.clone(), econ.objective, econ.aux_value, false),
            (false, true) => (ua.clone(), ua_cost, va_star, true),
            (false, false) => {
                return Err(fail(
                    "economic",
                    format!(
                        "contraction bound Π = {pi:.6e} is below V_a* = {va_star:.6e} and the solver returned violation {:.3e}; \
                         the realized model error exceeded the bound μ̄",
                        econ.max_violation
                    ),
                ))
            }
        };

        let m = self.m();
        let u0 = inputs[..m].to_vec();
        let log = StepLog {
            k,
            x: x.to_vec(),
            u: u0.clone(),
            inputs: inputs.clone(),
            ve_star,
            va_star,
            va_e,
            pi,
            terminal_level: self.design.aux.terminal(x),
            stage_aux: self.design.aux.stage(x, &u0),
            candidate_feasible: candidate.as_ref().map(|(_, v, _)| *v <= tol),
            candidate_violation: candidate.as_ref().map(|(_, v, _)| *v),
            candidate_aux: candidate.as_ref().map(|(_, _, j)| *j),
            va_from_candidate,
            economic_fallback,
            stabilizing_status: stab_status,
            economic_status: econ.status,
            stabilizing_seconds,
            economic_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        };
        state.k += 1;
        state.pi = pi;
        state.va_e_prev = Some(va_e);
        state.prev_inputs = Some(inputs);
        Ok(log)
    }
}

/// Free-function form of [`Lempc::step`].
pub fn lempc_step(controller: &Lempc, state: &mut ControllerState, x: &[f64]) -> Result<StepLog> {
    controller.step(state, x)
}

/// Writes step logs as CSV, one row per step.
pub fn write_step_log_csv<W: std::io::Write>(logs: &[StepLog], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let (n, m) = logs.first().map(|l| (l.x.len(), l.u.len())).unwrap_or((0, 0));
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=m).map(|i| format!("u_{i}")));
    for h in [
        "ve_star",
        "va_star",
        "va_e",
        "pi",
        "terminal_level",
        "candidate_feasible",
        "economic_fallback",
        "stabilizing_seconds",
        "economic_seconds",
        "total_seconds",
    ] {
        header.push(h.into());
    }
    w.write_record(&header)?;
    for l in logs {
        let mut row = vec![l.k.to_string()];
        row.extend(l.x.iter().map(|v| format!("{v:e}")));
        row.extend(l.u.iter().map(|v| format!("{v:e}")));
        for v in [l.ve_star, l.va_star, l.va_e, l.pi, l.terminal_level] {
            row.push(format!("{v:e}"));
        }
        row.push(l.candidate_feasible.map(|b| b.to_string()).unwrap_or_default());
        row.push(l.economic_fallback.to_string());
        for v in [l.stabilizing_seconds, l.economic_seconds, l.total_seconds] {
            row.push(format!("{v:e}"));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
