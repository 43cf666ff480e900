use lempc::plants::{
    avg_economic_cost, cstr_step, generate_dataset, numeric_map, CstrParams, CstrPlant, NumericPlant, Plant,
};
use lempc::regression::{assign_cluster, estimate_local_lipschitz, kernel_eval, ki_predict, kmeans_fit, Dataset};
use proptest::prelude::*;

fn cstr_state() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.2f64..=0.8, 300.0f64..=370.0, 280.0f64..=350.0, 280.0f64..=360.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn normalization_round_trips((ca, t, tc, tr) in cstr_state()) {
        let plant = CstrPlant::default();
        let z = [ca, t, tc, tr];
        let norm = plant.normalization();
        let back = norm.denormalize(&norm.normalize(&z));
        for (a, b) in z.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        let w = norm.normalize(&z);
        prop_assert!(w.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn euler_disturbance_is_additive(
        (ca, t, tc, tr) in cstr_state(),
        d in prop::array::uniform3(-2e-5f64..=2e-5),
    ) {
        let p = CstrParams::default();
        let x = [ca, t, tc];
        let clean = cstr_step(&p, &x, tr, &[0.0; 3]).unwrap();
        let noisy = cstr_step(&p, &x, tr, &d).unwrap();
        for i in 0..3 {
            let shift = noisy[i] - clean[i];
            prop_assert!((shift - p.sample_time * d[i]).abs() <= 1e-12 * clean[i].abs().max(1.0));
        }
    }

    #[test]
    fn numeric_map_is_bounded(x in 0.0f64..=20.0, u in 0.0f64..=20.0, d in -1.0f64..=1.0) {
        let y = numeric_map(x, u, d).unwrap();
        prop_assert!((-9.0..=89.0).contains(&y));
        let clean = numeric_map(x, u, 0.0).unwrap();
        prop_assert!(((y - clean) - d).abs() < 1e-12);
    }

    #[test]
    fn kernel_is_symmetric_and_bounded(
        a in prop::collection::vec(-2.0f64..2.0, 3),
        b in prop::collection::vec(-2.0f64..2.0, 3),
        var in 0.1f64..4.0,
        l in 0.1f64..5.0,
    ) {
        let kab = kernel_eval(&a, &b, var, l);
        prop_assert_eq!(kab, kernel_eval(&b, &a, var, l));
        prop_assert!(kab > 0.0 || a != b);
        prop_assert!(kab <= var);
        prop_assert!((kernel_eval(&a, &a, var, l) - var).abs() < 1e-15);
    }

    #[test]
    fn linear_data_recovers_its_slope(
        slope in prop::collection::vec(-3.0f64..3.0, 2),
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let outputs: Vec<Vec<f64>> = inputs.iter().map(|w| vec![slope[0] * w[0] + slope[1] * w[1]]).collect();
        let norm = slope[0].hypot(slope[1]);
        let est = estimate_local_lipschitz(&inputs, &outputs, 0.0).unwrap();
        prop_assert!(est <= norm * (1.0 + 1e-12) + 1e-12);
        prop_assert!(est >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn datasets_are_deterministic_and_in_range(seed in any::<u64>()) {
        let plant = NumericPlant::new(1.0);
        let a = generate_dataset(&plant, 50, seed).unwrap();
        let b = generate_dataset(&plant, 50, seed).unwrap();
        prop_assert_eq!(a.inputs(), b.inputs());
        prop_assert_eq!(a.outputs(), b.outputs());
        prop_assert!(a.outputs().iter().all(|y| (-9.0..=89.0).contains(&y[0])));
        a.check_within(plant.region()).unwrap();
    }

    #[test]
    fn cstr_samples_are_normalized(seed in any::<u64>()) {
        let plant = CstrPlant::default();
        let d = generate_dataset(&plant, 40, seed).unwrap();
        let domain = plant.normalization().normalize_box(plant.region());
        d.check_within(&domain).unwrap();
        prop_assert_eq!(d.state_dim(), 3);
        prop_assert_eq!(d.input_dim(), 1);
    }

    #[test]
    fn samples_route_to_their_nearest_center(seed in 0u64..500, k in 1usize..6) {
        let plant = NumericPlant::new(1.0);
        let data = generate_dataset(&plant, 60, seed).unwrap();
        let model = kmeans_fit(&data, k, 50, seed).unwrap();
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        for (w, &j) in data.inputs().iter().zip(&model.assignment) {
            let routed = assign_cluster(w, &model).unwrap();
            prop_assert_eq!(routed, j);
            let dj = sq(w, &model.centers[j]);
            prop_assert!(model.centers.iter().all(|c| dj <= sq(w, c)));
        }
        let monotone = model.wcss_history.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12));
        prop_assert!(monotone);
    }

    #[test]
    fn kinky_inference_reproduces_its_samples(seed in 0u64..500) {
        let plant = NumericPlant::new(0.0);
        let data = generate_dataset(&plant, 30, seed).unwrap();
        for (w, y) in data.inputs().iter().zip(data.outputs()).take(10) {
            let p = ki_predict(&data, 17.889, 0.0, w).unwrap();
            prop_assert!((p[0] - y[0]).abs() < 1e-9);
        }
    }
}

#[test]
fn noise_free_quotients_stay_below_the_true_constant() {
    let plant = NumericPlant::new(0.0);
    let data: Dataset = generate_dataset(&plant, 200, 11).unwrap();
    let est = estimate_local_lipschitz(data.inputs(), data.outputs(), 0.0).unwrap();
    assert!(est <= (16.0f64.powi(2) + 8.0f64.powi(2)).sqrt());
}

#[test]
fn constant_trajectory_averages_its_stage_cost() {
    let (u_s, t_s) = (344.5, 344.1);
    let stage = u_s + (t_s - 345.0f64).powi(2);
    let costs = vec![stage; 50];
    let avg = avg_economic_cost(&costs, None).unwrap();
    assert!((avg - stage).abs() < 1e-12);
}
