//! Kinky-inference baseline: midpoint of the Lipschitz ceiling and floor
//! envelopes over the whole dataset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::Dataset;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KinkyInference {
    width: usize,
    output_dim: usize,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
    pub lipschitz: f64,
    /// Symmetric noise allowance; widens both envelopes equally.
    pub lambda: f64,
}

impl KinkyInference {
    pub fn new(dataset: &Dataset, lipschitz: f64, lambda: f64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::invalid("kinky inference needs at least one sample"));
        }
        if !(lipschitz >= 0.0) || !(lambda >= 0.0) {
            return Err(Error::invalid("L and λ must be nonnegative"));
        }
        Ok(Self {
            width: dataset.input_width(),
            output_dim: dataset.state_dim(),
            inputs: dataset.inputs().concat(),
            outputs: dataset.outputs().concat(),
            lipschitz,
            lambda,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    #[inline]
    pub fn predict_into(&self, w: &[f64], out: &mut [f64]) {
        let p = self.output_dim;
        let mut ceil = [f64::INFINITY; 8];
        let mut floor = [f64::NEG_INFINITY; 8];
        let (mut ceil_v, mut floor_v);
        let (ceil, floor): (&mut [f64], &mut [f64]) = if p <= 8 {
            (&mut ceil[..p], &mut floor[..p])
        } else {
            ceil_v = vec![f64::INFINITY; p];
            floor_v = vec![f64::NEG_INFINITY; p];
            (&mut ceil_v[..], &mut floor_v[..])
        };
        for (wi, yi) in self.inputs.chunks_exact(self.width).zip(self.outputs.chunks_exact(p)) {
            let d2: f64 = w.iter().zip(wi).map(|(a, b)| (a - b) * (a - b)).sum();
            let r = self.lipschitz * d2.sqrt() + self.lambda;
            for d in 0..p {
                ceil[d] = ceil[d].min(yi[d] + r);
                floor[d] = floor[d].max(yi[d] - r);
            }
        }
        for d in 0..p {
            out[d] = 0.5 * (ceil[d] + floor[d]);
        }
    }

    pub fn predict(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.width {
            return Err(Error::invalid("query dimension mismatch"));
        }
        let mut out = vec![0.0; self.output_dim];
        self.predict_into(w, &mut out);
        Ok(out)
    }
}

pub fn ki_predict(dataset: &Dataset, lipschitz: f64, lambda: f64, w: &[f64]) -> Result<Vec<f64>> {
    KinkyInference::new(dataset, lipschitz, lambda)?.predict(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Dataset {
        Dataset::new(1, 0, vec![vec![0.0], vec![1.0]], vec![vec![0.0], vec![1.0]]).unwrap()
    }

    #[test]
    fn midpoint_between_two_samples() {
        let y = ki_predict(&line(), 1.0, 0.0, &[0.5]).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interpolates_consistent_data() {
        let d = Dataset::new(
            1,
            1,
            vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.2, 0.9]],
            vec![vec![0.0], vec![1.2], vec![0.4]],
        )
        .unwrap();
        // L above the data's pairwise slope keeps the envelopes consistent
        let ki = KinkyInference::new(&d, 5.0, 0.0).unwrap();
        for (w, y) in d.inputs().iter().zip(d.outputs()) {
            assert!((ki.predict(w).unwrap()[0] - y[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_sample_is_constant() {
        let d = Dataset::new(1, 0, vec![vec![2.0]], vec![vec![7.0]]).unwrap();
        for w in [-10.0, 2.0, 3.5] {
            assert_eq!(ki_predict(&d, 3.0, 0.0, &[w]).unwrap(), vec![7.0]);
        }
    }
}
