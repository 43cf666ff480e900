//! Invariant suite executed after every pipeline run.

use super::config::ExperimentConfig;
use super::pipeline::{prediction_errors, Learned};
use super::report::{BenchTable, BoundRecord, InvariantCheck, SweepRow};
use crate::controller::{FhocpProblem, Lempc};
use crate::error::Result;
use crate::plants::{Plant, Trajectory};
use crate::rng::{derive_seed, tags};
use crate::solvers::{check_derivatives, random_points};

/// Absolute slack used when re-checking fitted constraints.
pub const FIT_CHECK_TOL: f64 = 1e-6;

fn check(name: &str, hard: bool, checked: usize, failed: usize, detail: impl Into<String>) -> InvariantCheck {
    InvariantCheck {
        name: name.into(),
        hard,
        checked,
        failed,
        detail: detail.into(),
    }
}

/// Largest training residual and gradient norm excess per cluster:
/// `(residual counts, cap counts, worst residual excess, worst cap excess)`.
pub fn fit_constraint_counts(learned: &Learned, slack: f64) -> ((usize, usize), (usize, usize), f64, f64) {
    let pred = &learned.predictor;
    let (mut band, mut band_bad, mut cap, mut cap_bad) = (0, 0, 0, 0);
    let (mut worst_band, mut worst_cap) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (j, local) in pred.locals.iter().enumerate() {
        for i in 0..local.len() {
            let y = pred.predict_with_cluster(j, local.input(i));
            for (a, b) in y.iter().zip(local.output(i)) {
                let excess = (a - b).abs() - slack;
                worst_band = worst_band.max(excess);
                band += 1;
                if excess > FIT_CHECK_TOL {
                    band_bad += 1;
                }
            }
        }
        for ws in &local.constraint_samples {
            let (_, jac) = local.eval_jacobian(&pred.kernel, ws);
            for d in 0..pred.state_dim {
                let norm = jac.row(d).norm();
                let excess = norm - local.prior_lipschitz[d];
                worst_cap = worst_cap.max(excess);
                cap += 1;
                if excess > FIT_CHECK_TOL {
                    cap_bad += 1;
                }
            }
        }
    }
    ((band, band_bad), (cap, cap_bad), worst_band, worst_cap)
}

pub fn learning_checks(config: &ExperimentConfig, plant: &dyn Plant, learned: &Learned) -> Vec<InvariantCheck> {
    let norm = plant.normalization();
    let mut round_bad = 0;
    for w in learned.dataset.inputs() {
        let x = norm.denormalize(w);
        let back = norm.denormalize(&norm.normalize(&x));
        if x.iter().zip(&back).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
            round_bad += 1;
        }
    }
    let outside = learned
        .dataset
        .inputs()
        .iter()
        .chain(learned.test.inputs())
        .filter(|w| !learned.domain.contains(w))
        .count();
    let ((band, band_bad), (cap, cap_bad), worst_band, worst_cap) =
        fit_constraint_counts(learned, config.learning.residual_slack);
    let l = &learned.summary.lipschitz;
    let bad_l = l.per_cluster.iter().filter(|v| !(v.is_finite() && **v >= 0.0)).count();
    vec![
        check(
            "normalization_round_trip",
            true,
            learned.dataset.len(),
            round_bad,
            "denormalize(normalize(x)) = x to 1e-12",
        ),
        check(
            "samples_within_domain",
            true,
            learned.dataset.len() + learned.test.len(),
            outside,
            "normalized samples lie in the constraint box",
        ),
        check(
            "fit_residual_band",
            true,
            band,
            band_bad,
            format!("|f̂(w_i) - y_i| ≤ δ̄_s + 1e-6; worst excess {worst_band:.3e}"),
        ),
        check(
            "fit_gradient_cap",
            true,
            cap,
            cap_bad,
            format!("‖∇f̂_d(w_s)‖ ≤ L̄_d + 1e-6; worst excess {worst_cap:.3e}"),
        ),
        check(
            "posterior_lipschitz_finite",
            true,
            l.per_cluster.len(),
            bad_l,
            format!("largest {:.4}", l.global),
        ),
    ]
}

pub fn bound_checks(learned: &Learned, bound: &BoundRecord) -> Vec<InvariantCheck> {
    let Some(mu) = bound.mu_bar else {
        return Vec::new();
    };
    let errors = prediction_errors(&learned.predictor, &learned.test);
    let above = errors.iter().filter(|e| **e > mu).count();
    vec![check(
        "bound_covers_test_errors",
        false,
        errors.len(),
        above,
        format!("{} bound μ̄ = {mu:.6e}", bound.mode),
    )]
}

pub fn design_checks(controller: &Lempc, bound: &BoundRecord) -> Vec<InvariantCheck> {
    let d = &controller.design;
    let t = &d.terminal;
    let levels_ok = t.alpha_n_min <= t.alpha_n && t.alpha_n <= t.alpha_p && t.alpha_n > 0.0;
    let pd = t.p.clone().cholesky().is_some();
    let mut out = vec![
        check(
            "terminal_levels_ordered",
            true,
            1,
            usize::from(!levels_ok),
            format!("α_N,min = {:.6e} ≤ α_N = {:.6e} ≤ α_p = {:.6e}", t.alpha_n_min, t.alpha_n, t.alpha_p),
        ),
        check("terminal_weight_positive_definite", true, 1, usize::from(!pd), "P ≻ 0"),
        check(
            "bound_within_admissible",
            true,
            1,
            usize::from(d.mu_bar > t.admissible_mu_bar),
            format!("μ̄ = {:.6e}, admissible {:.6e}", d.mu_bar, t.admissible_mu_bar),
        ),
        check(
            "steady_state_residual",
            true,
            1,
            usize::from(!(d.steady.residual <= 1e-6)),
            format!("‖f̂(x_s,u_s) - x_s‖ = {:.3e}", d.steady.residual),
        ),
    ];
    if let Some(above) = bound.test_points_above_bound {
        out.push(check(
            "test_errors_within_controller_bound",
            false,
            bound.test_max_error.is_finite() as usize,
            usize::from(above > 0),
            format!("{above} test points exceed μ̄; largest test error {:.6e}", bound.test_max_error),
        ));
    }
    out
}

/// Per-step contraction, descent, feasibility and bookkeeping checks over
/// all closed-loop runs.
pub fn closed_loop_checks(plant: &dyn Plant, controller: &Lempc, runs: &[Result<Trajectory>]) -> Vec<InvariantCheck> {
    let d = &controller.design;
    let tol = controller.options.tol;
    let bound = plant.disturbance_bound();
    let (mut steps, mut contraction_bad, mut descent, mut descent_bad) = (0, 0, 0, 0);
    let (mut cand, mut cand_bad, mut states, mut state_bad) = (0, 0, 0, 0);
    let (mut dist, mut dist_bad, mut flags_bad, mut started, mut entered) = (0, 0, 0, 0, 0);
    let (mut err_count, mut err_bad) = (0, 0);
    for run in runs {
        let Ok(t) = run else { continue };
        started += 1;
        if t.terminal_entry.is_some() {
            entered += 1;
        }
        let failed_steps = t.feasible.iter().filter(|f| !**f).count();
        let consistent = t.feasible.len() == t.logs.len() + failed_steps
            && failed_steps == usize::from(t.failure.is_some())
            && t.states.len() == t.logs.len() + 1
            && t.constraint_violated.len() == t.states.len()
            && t.stage_costs.len() == t.logs.len();
        flags_bad += usize::from(!consistent);
        for log in &t.logs {
            steps += 1;
            if log.va_e > log.pi + tol {
                contraction_bad += 1;
            }
            if let Some(ok) = log.candidate_feasible {
                cand += 1;
                cand_bad += usize::from(!ok);
            }
        }
        for pair in t.logs.windows(2) {
            descent += 1;
            let rhs = -d.alpha * pair[0].stage_aux + d.mu_bar * d.chi + 1e-6;
            if pair[1].va_e - pair[0].va_e > rhs {
                descent_bad += 1;
            }
        }
        for v in &t.constraint_violated {
            states += 1;
            state_bad += usize::from(*v);
        }
        for delta in &t.disturbances {
            dist += 1;
            dist_bad += usize::from(delta.iter().zip(bound).any(|(x, b)| x.abs() > *b));
        }
        for e in &t.model_errors {
            err_count += 1;
            err_bad += usize::from(*e > d.mu_bar);
        }
    }
    let not_started = runs.len() - started;
    vec![
        check("closed_loop_started", false, runs.len(), not_started, "first step feasible"),
        check("closed_loop_bookkeeping", true, runs.len(), flags_bad, "flags mark exactly the failed steps"),
        check("contraction_constraint", true, steps, contraction_bad, "V_a^e(x_k) ≤ Π(x_k) + tol"),
        check(
            "contraction_descent",
            false,
            descent,
            descent_bad,
            "V_a^e(x_k) - V_a^e(x_{k-1}) ≤ -α L_a(x_{k-1}, u_0*) + μ̄χ + 1e-6",
        ),
        check("shifted_candidate_feasible", false, cand, cand_bad, "recursive feasibility certificate"),
        check("state_constraints", false, states, state_bad, "closed-loop states stay in the constraint box"),
        check("disturbance_within_bound", true, dist, dist_bad, "|δ_i| ≤ δ̄_i"),
        check("model_error_within_bound", false, err_count, err_bad, "realized one-step error ≤ μ̄"),
        check("terminal_set_reached", false, started, started - entered, "E_a(x_k) ≤ α_N within the run"),
    ]
}

pub fn sweep_checks(rows: &[SweepRow]) -> Vec<InvariantCheck> {
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let mut cost_bad = 0;
    let mut entry_bad = 0;
    for pair in sorted.windows(2) {
        match (pair[0].average_cost, pair[1].average_cost) {
            (Some(a), Some(b)) if a <= b => {}
            _ => cost_bad += 1,
        }
        let as_time = |r: &SweepRow| r.terminal_entry.unwrap_or(usize::MAX);
        if as_time(pair[1]) > as_time(pair[0]) {
            entry_bad += 1;
        }
    }
    let unit: Vec<&&SweepRow> = sorted.iter().filter(|r| r.alpha == 1.0).collect();
    let unit_bad = unit.iter().filter(|r| !r.pi_equals_va_star).count();
    let pairs = sorted.len().saturating_sub(1);
    vec![
        check("sweep_cost_nondecreasing_in_alpha", false, pairs, cost_bad, "average economic cost"),
        check("sweep_entry_nonincreasing_in_alpha", false, pairs, entry_bad, "terminal-set entry step"),
        check("sweep_unit_alpha_recovers_stabilizing", true, unit.len(), unit_bad, "Π = V_a* for k ≥ 1 at α = 1"),
    ]
}

/// Central differences against the FHOCP derivatives at the first
/// configured initial state (or the steady state).
pub fn fhocp_gradient_check(config: &ExperimentConfig, controller: &Lempc) -> InvariantCheck {
    let x0 = config
        .simulation
        .as_ref()
        .and_then(|s| s.initial_states.first().cloned())
        .unwrap_or_else(|| controller.design.steady.x.clone());
    let seed = derive_seed(config.seed, tags::GRADCHECK, 0);
    let mut worst = 0.0f64;
    let mut failed = 0;
    let mut checked = 0;
    for economic in [false, true] {
        let problem = FhocpProblem {
            setup: controller.setup(),
            x0: x0.clone(),
            economic: economic.then_some((controller.economic, controller.design.pi0)),
        };
        let points = random_points(&problem, 8, 1e-6, seed);
        match check_derivatives(&problem, &points, 1e-6, 1e-5) {
            Ok(g) => {
                checked += g.points;
                worst = worst.max(g.max_relative_error);
                failed += usize::from(!g.passed);
            }
            Err(_) => failed += 1,
        }
    }
    check(
        "fhocp_gradients",
        false,
        checked,
        failed,
        format!("largest relative finite-difference mismatch {worst:.3e}"),
    )
}

pub fn bench_check(table: &BenchTable) -> InvariantCheck {
    let ok = match (table.rows.first(), table.rows.get(1)) {
        (Some(a), Some(b)) if table.queries > 0 => a.abs_errors.median < b.abs_errors.median,
        _ => true,
    };
    check(
        "bench_cklr_more_accurate",
        false,
        usize::from(table.queries > 0),
        usize::from(!ok),
        "median absolute error below the kinky-inference baseline",
    )
}
