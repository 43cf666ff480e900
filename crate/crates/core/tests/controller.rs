mod common;

use common::*;
use lempc::controller::{
    compute_steady_state, pi_update, solve_economic_fhocp, solve_stabilizing_fhocp, LinearModel, Lempc, Model,
    QuadraticCost,
};
use lempc::plants::{closed_loop_simulate, Disturbance, PredictorPlant};
use lempc::solvers::{SolveStatus, SqpOptions};
use lempc::Error;

#[test]
fn steady_state_of_identity_map_is_origin() {
    let model = LinearModel::new(scalar(0.0), scalar(1.0));
    let cost = QuadraticCost::new(scalar(0.0), scalar(1.0), vec![0.0], vec![0.0]);
    let s = compute_steady_state(&model, &cost, &region(), 8, 1, &SqpOptions::default()).unwrap();
    assert!(s.x[0].abs() < 1e-6 && s.u[0].abs() < 1e-6);
    assert!(s.cost.abs() < 1e-10);
}

#[test]
fn steady_state_on_fixed_point_line() {
    // x = 2u on the fixed-point manifold; d/du[(2u - 0.2)² + u²] = 0 → u = 0.08
    let cost = quadratic(0.2, 0.0);
    let s = compute_steady_state(&toy(), &cost, &region(), 16, 3, &SqpOptions::default()).unwrap();
    assert!((s.u[0] - 0.08).abs() < 1e-5, "{:?}", s);
    assert!((s.x[0] - 0.16).abs() < 1e-5, "{:?}", s);
    assert!(s.residual <= 1e-6);
}

#[test]
fn linear_terminal_gain_matches_lqr() {
    let model = toy();
    let cost = quadratic(0.0, 0.0);
    let ctrl = Lempc::with_steady_state(&model, &cost, &region(), 0.5, 0.0, &config(2, 0.9), origin()).unwrap();
    let t = &ctrl.design.terminal;
    let p = riccati_oracle();
    assert!((t.riccati[(0, 0)] - p).abs() < 1e-9);
    assert!((t.gain[(0, 0)] + 0.5 * p / (1.0 + p)).abs() < 1e-9);
    // decrease is exact, so only |x| ≤ 1 limits the level
    assert!((t.alpha_p - 1.2 * p).abs() < 1e-6 * p, "α_p = {}", t.alpha_p);
    assert!(t.alpha_n <= t.alpha_p);
}

#[test]
fn huge_error_bound_is_rejected() {
    let model = toy();
    let cost = quadratic(0.0, 0.0);
    let err = Lempc::with_steady_state(&model, &cost, &region(), 0.5, 1e3, &config(6, 0.9), origin())
        .err()
        .expect("design must fail");
    assert!(matches!(err.root(), Error::BoundTooLarge(_)), "{err}");
}

#[test]
fn bound_above_admissible_is_rejected() {
    let model = toy();
    let cost = quadratic(0.0, 0.0);
    let ok = Lempc::with_steady_state(&model, &cost, &region(), 0.5, 0.0, &config(3, 0.9), origin()).unwrap();
    let admissible = ok.design.terminal.admissible_mu_bar;
    assert!(admissible > 0.0 && admissible.is_finite());
    // tightening only shrinks the terminal region, so the bound at μ̄ = 0 is an upper limit
    let small = 0.05 * admissible;
    let below = Lempc::with_steady_state(&model, &cost, &region(), 0.5, small, &config(3, 0.9), origin()).unwrap();
    let t = &below.design.terminal;
    assert!(t.c_e * 0.25 * small + t.alpha_n <= t.alpha_p * (1.0 + 1e-12));
    assert!(t.alpha_n >= t.alpha_n_min && small <= t.admissible_mu_bar);
    let above = Lempc::with_steady_state(&model, &cost, &region(), 0.5, 1.1 * admissible, &config(3, 0.9), origin());
    assert!(matches!(above.err().unwrap().root(), Error::BoundTooLarge(_)));
}

#[test]
fn stabilizing_problem_matches_finite_horizon_lqr() {
    let model = toy();
    let cost = quadratic(0.0, 0.0);
    let ctrl = Lempc::with_steady_state(&model, &cost, &region(), 0.5, 0.0, &config(2, 0.9), origin()).unwrap();
    let (p0, gains) = finite_horizon_lqr(1.2 * riccati_oracle(), 2);
    let x0 = 0.3;
    let sol = solve_stabilizing_fhocp(&ctrl.setup(), &[x0], &[0.0, 0.0], &ctrl.options).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - p0 * x0 * x0).abs() < 1e-6, "{} vs {}", sol.objective, p0 * x0 * x0);
    let u0 = gains[0] * x0;
    let x1 = 0.5 * x0 + u0;
    assert!((sol.inputs[0] - u0).abs() < 1e-5);
    assert!((sol.inputs[1] - gains[1] * x1).abs() < 1e-5);
}

#[test]
fn stabilizing_problem_at_steady_state_is_zero() {
    let model = toy();
    let cost = quadratic(0.0, 0.0);
    let ctrl = Lempc::with_steady_state(&model, &cost, &region(), 0.5, 0.0, &config(4, 0.9), origin()).unwrap();
    let sol = solve_stabilizing_fhocp(&ctrl.setup(), &[0.0], &[0.2; 4], &ctrl.options).unwrap();
    assert!(sol.objective < 1e-10);
    assert!(sol.inputs.iter().all(|u| u.abs() < 1e-5));
}

#[test]
fn unreachable_state_is_infeasible() {
    let model = toy();
    let cost = quadratic(0.0, 0.0);
    let ctrl = Lempc::with_steady_state(&model, &cost, &region(), 0.5, 0.0, &config(3, 0.9), origin()).unwrap();
    // 0.5·5 + u ≥ 1.5 for every admissible u
    let sol = solve_stabilizing_fhocp(&ctrl.setup(), &[5.0], &[0.0; 3], &ctrl.options).unwrap();
    assert!(sol.status == SolveStatus::Infeasible || sol.max_violation > 1e-3);
    let mut state = ctrl.initial_state();
    let err = ctrl.step(&mut state, &[5.0]).unwrap_err();
    assert!(matches!(err, Error::StepFailed { step: 0, .. }), "{err}");
    let plant = PredictorPlant::new(&model, region(), vec![0.0]);
    assert!(closed_loop_simulate(&plant, &ctrl, &[5.0], 3, &Disturbance::Zero).is_err());
}

#[test]
fn economic_problem_beats_grid() {
    let model = toy();
    let aux_cost = quadratic(0.0, 0.0);
    let econ = quadratic(0.5, 0.0);
    let ctrl = Lempc::with_steady_state(&model, &aux_cost, &region(), 0.5, 0.0, &config(2, 0.9), origin()).unwrap();
    let setup = ctrl.setup();
    let x0 = [0.3];
    let va = solve_stabilizing_fhocp(&setup, &x0, &[0.0, 0.0], &ctrl.options).unwrap();
    let pi = va.objective + 0.05;
    let sol = solve_economic_fhocp(&setup, &econ, &x0, pi, &va.inputs, &ctrl.options).unwrap();
    assert!(sol.max_violation <= 1e-6);
    assert!(sol.aux_value <= pi + 1e-6);

    let best = grid_best(&ctrl.design.terminal, &econ, x0[0], pi);
    assert!(best.is_finite());
    assert!(sol.objective <= best + 1e-4, "{} vs grid {}", sol.objective, best);
}

#[test]
fn inactive_contraction_at_first_step() {
    let model = toy();
    let econ = quadratic(0.5, 0.0);
    let ctrl = Lempc::with_steady_state(&model, &econ, &region(), 0.5, 0.0, &config(3, 0.9), origin()).unwrap();
    let setup = ctrl.setup();
    let x0 = [0.3];
    let va = solve_stabilizing_fhocp(&setup, &x0, &[0.0; 3], &ctrl.options).unwrap();
    let bounded = solve_economic_fhocp(&setup, &econ, &x0, ctrl.design.pi0, &va.inputs, &ctrl.options).unwrap();
    let free = solve_economic_fhocp(&setup, &econ, &x0, 1e12, &va.inputs, &ctrl.options).unwrap();
    assert!(bounded.aux_value < ctrl.design.pi0);
    assert!((bounded.objective - free.objective).abs() < 1e-7, "{bounded:?}\n{free:?}");
}

#[test]
fn step_is_the_composition_of_its_parts() {
    let model = toy();
    let econ = quadratic(0.5, 0.0);
    let cfg = config(3, 0.6);
    let ctrl = Lempc::with_steady_state(&model, &econ, &region(), 0.5, 0.0, &cfg, origin()).unwrap();
    let setup = ctrl.setup();
    let x0 = [0.4];

    let mut state = ctrl.initial_state();
    let log0 = ctrl.step(&mut state, &x0).unwrap();
    let va = solve_stabilizing_fhocp(&setup, &x0, &[0.0; 3], &ctrl.options).unwrap();
    let ve = solve_economic_fhocp(&setup, &econ, &x0, ctrl.design.pi0 - 1e-7, &va.inputs, &ctrl.options).unwrap();
    assert_eq!(log0.pi, ctrl.design.pi0);
    assert!((log0.va_star - va.objective).abs() < 1e-8);
    assert!((log0.ve_star - ve.objective).abs() < 1e-8);
    assert!((log0.u[0] - ve.inputs[0]).abs() < 1e-5);

    let x1 = model.step(&x0, &log0.u);
    let log1 = ctrl.step(&mut state, &x1).unwrap();
    let expected = pi_update(log1.va_star, log0.va_e, cfg.alpha, 0.0, ctrl.design.chi);
    assert_eq!(log1.pi, expected);
    let va1 = solve_stabilizing_fhocp(&setup, &x1, &[0.0; 3], &ctrl.options).unwrap();
    assert!((log1.va_star - va1.objective).abs() < 1e-7);
}

#[test]
fn equilibrium_is_invariant() {
    let model = toy();
    let econ = quadratic(0.16, 0.08);
    let ctrl = Lempc::design(&model, &econ, &region(), 0.5, 0.0, &config(4, 0.9)).unwrap();
    let xs = ctrl.design.steady.x.clone();
    assert!((xs[0] - 0.16).abs() < 1e-6);
    let plant = PredictorPlant::new(&model, region(), vec![0.0]);
    let traj = closed_loop_simulate(&plant, &ctrl, &xs, 6, &Disturbance::Zero).unwrap();
    assert!(traj.failure.is_none(), "{:?} {:?}", traj.failure, traj.logs);
    for (x, u) in traj.states.iter().zip(&traj.inputs) {
        assert!((x[0] - 0.16).abs() < 1e-6);
        assert!((u[0] - 0.08).abs() < 1e-5);
    }
    assert_eq!(traj.terminal_entry, Some(0));
}

#[test]
fn unit_alpha_recovers_stabilizing_values() {
    let model = toy();
    let econ = quadratic(0.5, 0.0);
    let ctrl = Lempc::with_steady_state(&model, &econ, &region(), 0.5, 0.0, &config(3, 1.0), origin()).unwrap();
    let plant = PredictorPlant::new(&model, region(), vec![0.0]);
    let traj = closed_loop_simulate(&plant, &ctrl, &[0.8], 10, &Disturbance::Zero).unwrap();
    assert!(traj.failure.is_none());
    for log in traj.logs.iter().skip(1) {
        assert_eq!(log.pi, log.va_star);
        assert!((log.va_e - log.va_star).abs() <= 1e-6, "k={} {} {}", log.k, log.va_e, log.va_star);
    }
}

#[test]
fn closed_loop_contraction_and_descent() {
    let model = toy();
    let econ = quadratic(0.5, 0.0);
    let (l, mu) = (0.5, 0.01);
    let cfg = config(4, 0.5);
    let ctrl = Lempc::with_steady_state(&model, &econ, &region(), l, mu, &cfg, origin()).unwrap();
    let plant = PredictorPlant::new(&model, region(), vec![mu]);
    let traj = closed_loop_simulate(&plant, &ctrl, &[0.7], 25, &Disturbance::Uniform { seed: 4 }).unwrap();
    assert!(traj.failure.is_none(), "{:?}", traj.failure);
    assert!(traj.model_errors.iter().all(|e| *e <= mu + 1e-12));
    assert!(traj.constraint_violated.iter().all(|v| !v));
    let chi = ctrl.design.chi;
    for pair in traj.logs.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        assert!(cur.va_e <= cur.pi + cfg.solver.tol);
        assert_eq!(cur.pi, pi_update(cur.va_star, prev.va_e, cfg.alpha, mu, chi));
        assert!(cur.va_e - prev.va_e <= -cfg.alpha * prev.stage_aux + mu * chi + 1e-6);
        assert_eq!(cur.candidate_feasible, Some(true), "k = {}", cur.k);
    }
}

#[test]
fn shifted_candidate_appends_local_law() {
    let model = toy();
    let econ = quadratic(0.5, 0.0);
    let ctrl = Lempc::with_steady_state(&model, &econ, &region(), 0.5, 0.0, &config(3, 0.9), origin()).unwrap();
    let prev = [0.1, -0.2, 0.05];
    let x = [0.3];
    let cand = ctrl.shifted_candidate(&prev, &x);
    assert_eq!(&cand[..2], &prev[1..]);
    let x1 = 0.5 * 0.3 - 0.2;
    let x2 = 0.5 * x1 + 0.05;
    assert!((cand[2] - ctrl.design.terminal.gain[(0, 0)] * x2).abs() < 1e-12);
}
