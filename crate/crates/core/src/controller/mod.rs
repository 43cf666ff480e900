//! Constraint tightening, terminal ingredients, the contraction bound and
//! the learning-based economic MPC loop.

mod cost;
mod fhocp;
mod lempc;
mod model;
mod steady;
mod terminal;
mod tightening;

pub use cost::{AuxCost, EconomicCost, QuadraticCost};
pub use fhocp::{solve_economic_fhocp, solve_stabilizing_fhocp, FhocpProblem, FhocpSolution, HorizonSetup};
pub use lempc::{
    lempc_step, tightened_boxes, write_step_log_csv, ControllerConfig, ControllerState, Lempc, LempcDesign, StepLog,
};
pub use model::{LinearModel, Model};
pub use steady::{compute_steady_state, SteadyState};
pub use terminal::{design_terminal, linearize, solve_dare, TerminalConfig, TerminalIngredients};
pub use tightening::{build_tightened_box, chi_constant, pi_init, pi_update, tightening_margin};
