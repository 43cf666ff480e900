use super::Plant;
use crate::error::{Error, Result};
use crate::regression::Dataset;
use crate::rng::{stream_rng, tags};
use rand::Rng;

/// Samples `(x, u)` uniformly in the plant region, applies one step with a
/// uniform disturbance, and records normalized `(w, y)` pairs.
/// Deterministic in `seed`; each sample draws from its own stream.
pub fn generate_dataset<P: Plant + ?Sized>(plant: &P, count: usize, seed: u64) -> Result<Dataset> {
    generate_dataset_tagged(plant, count, seed, tags::DATASET)
}

pub(crate) fn generate_dataset_tagged<P: Plant + ?Sized>(
    plant: &P,
    count: usize,
    seed: u64,
    tag: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    let n = plant.state_dim();
    let norm = plant.normalization();
    let bound = plant.disturbance_bound();
    let mut inputs = Vec::with_capacity(count);
    let mut outputs = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = stream_rng(seed, tag, i as u64);
        let w = plant.region().sample(&mut rng);
        let delta: Vec<f64> = bound
            .iter()
            .map(|b| if *b > 0.0 { rng.random_range(-*b..=*b) } else { 0.0 })
            .collect();
        let y = plant.step(&w[..n], &w[n..], &delta)?;
        inputs.push(norm.normalize(&w));
        outputs.push(norm.normalize_leading(&y));
    }
    Dataset::new(n, plant.input_dim(), inputs, outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::{CstrPlant, NumericPlant};
    use crate::regression::estimate_local_lipschitz;

    #[test]
    fn numeric_outputs_stay_in_range() {
        let d = generate_dataset(&NumericPlant::default(), 200, 1).unwrap();
        assert_eq!(d.len(), 200);
        assert!(d.outputs().iter().all(|y| (-9.0..=89.0).contains(&y[0])));
    }

    #[test]
    fn noise_free_quotients_respect_true_lipschitz() {
        let d = generate_dataset(&NumericPlant::new(0.0), 200, 2).unwrap();
        let l = estimate_local_lipschitz(d.inputs(), d.outputs(), 0.0).unwrap();
        assert!(l <= (16.0f64 * 16.0 + 8.0 * 8.0).sqrt());
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate_dataset(&CstrPlant::default(), 50, 9).unwrap();
        let b = generate_dataset(&CstrPlant::default(), 50, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&CstrPlant::default(), 50, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn cstr_inputs_are_normalized() {
        let d = generate_dataset(&CstrPlant::default(), 100, 3).unwrap();
        assert!(d.inputs().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }
}
