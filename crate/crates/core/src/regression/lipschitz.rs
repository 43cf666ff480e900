use crate::error::{Error, Result};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Noise-compensated pairwise Lipschitz estimate of a data subset:
/// `max(0, max_{i1,i2} (|y_i1 - y_i2| - λ) / |w_i1 - w_i2|)`.
///
/// Exhaustive over all pairs. A single-point subset returns 0.
pub fn estimate_local_lipschitz(inputs: &[Vec<f64>], outputs: &[Vec<f64>], lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("λ must be nonnegative"));
    }
    if inputs.len() != outputs.len() {
        return Err(Error::invalid("inputs and outputs differ in length"));
    }
    if inputs.len() < 2 {
        log::warn!("Lipschitz estimate on a cluster with {} point(s); using 0", inputs.len());
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    for i in 0..inputs.len() {
        for j in i + 1..inputs.len() {
            let dw = dist(&inputs[i], &inputs[j]);
            let dy = dist(&outputs[i], &outputs[j]);
            if dw == 0.0 {
                if dy > 0.0 {
                    return Err(Error::invalid(format!(
                        "samples {i} and {j} share an input but have different outputs"
                    )));
                }
                continue;
            }
            best = best.max((dy - lambda) / dw);
        }
    }
    Ok(best)
}

/// Same estimate restricted to one output coordinate.
pub fn estimate_output_lipschitz(
    inputs: &[Vec<f64>],
    outputs: &[Vec<f64>],
    dim: usize,
    lambda: f64,
) -> Result<f64> {
    let col: Vec<Vec<f64>> = outputs.iter().map(|y| vec![y[dim]]).collect();
    estimate_local_lipschitz(inputs, &col, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair() {
        let l = estimate_local_lipschitz(&[vec![0.0], vec![1.0]], &[vec![0.0], vec![3.0]], 1.0).unwrap();
        assert!((l - 2.0).abs() < 1e-15);
    }

    #[test]
    fn floors_at_zero() {
        let w = vec![vec![0.0], vec![1.0], vec![3.0]];
        let same = vec![vec![2.0]; 3];
        assert_eq!(estimate_local_lipschitz(&w, &same, 0.0).unwrap(), 0.0);
        let y = vec![vec![0.0], vec![0.5], vec![0.2]];
        assert_eq!(estimate_local_lipschitz(&w, &y, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn duplicate_inputs() {
        let w = vec![vec![1.0], vec![1.0]];
        assert!(estimate_local_lipschitz(&w, &[vec![0.0], vec![1.0]], 0.0).is_err());
        assert_eq!(estimate_local_lipschitz(&w, &[vec![1.0], vec![1.0]], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn single_point_is_zero() {
        assert_eq!(estimate_local_lipschitz(&[vec![1.0]], &[vec![5.0]], 0.0).unwrap(), 0.0);
    }
}
