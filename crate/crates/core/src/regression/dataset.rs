use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sets::BoxSet;

/// Paired model inputs `w = [x; u]` and (noisy) successors `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    state_dim: usize,
    input_dim: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl Dataset {
    /// Validates shapes, finiteness and uniqueness of the inputs.
    ///
    /// Duplicate inputs are rejected: the pairwise Lipschitz estimate is
    /// undefined on them.
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        inputs: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::invalid("state dimension must be positive"));
        }
        if inputs.is_empty() {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        if inputs.len() != outputs.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let wd = state_dim + input_dim;
        let mut seen = HashSet::with_capacity(inputs.len());
        for (i, (w, y)) in inputs.iter().zip(&outputs).enumerate() {
            if w.len() != wd || y.len() != state_dim {
                return Err(Error::invalid(format!("sample {i} has wrong dimension")));
            }
            if w.iter().chain(y).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("sample {i} is not finite")));
            }
            let key: Vec<u64> = w.iter().map(|v| (v + 0.0).to_bits()).collect();
            if !seen.insert(key) {
                return Err(Error::invalid(format!("sample {i} duplicates an earlier input")));
            }
        }
        Ok(Self {
            state_dim,
            input_dim,
            inputs,
            outputs,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input_width(&self) -> usize {
        self.state_dim + self.input_dim
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn check_within(&self, domain: &BoxSet) -> Result<()> {
        if domain.dim() != self.input_width() {
            return Err(Error::invalid("domain dimension does not match dataset"));
        }
        for (i, w) in self.inputs.iter().enumerate() {
            if domain.violation(w) > 1e-12 {
                return Err(Error::invalid(format!("sample {i} lies outside the domain")));
            }
        }
        Ok(())
    }

    /// Subset by index list, preserving order.
    pub fn subset(&self, indices: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        indices
            .iter()
            .map(|&i| (self.inputs[i].clone(), self.outputs[i].clone()))
            .unzip()
    }

    /// Writes `w_1..w_{n+m}, y_1..y_n` CSV.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wr = csv::Writer::from_path(path)?;
        let header: Vec<String> = (1..=self.input_width())
            .map(|i| format!("w_{i}"))
            .chain((1..=self.state_dim).map(|i| format!("y_{i}")))
            .collect();
        wr.write_record(&header)?;
        for (w, y) in self.inputs.iter().zip(&self.outputs) {
            wr.write_record(w.iter().chain(y).map(|v| format!("{v:e}")))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let header = rd.headers()?.clone();
        let n_w = header.iter().filter(|h| h.trim().starts_with("w_")).count();
        let n_y = header.iter().filter(|h| h.trim().starts_with("y_")).count();
        if n_w + n_y != header.len() || n_y == 0 || n_w < n_y {
            return Err(Error::invalid("dataset header must be w_1..w_k, y_1..y_n"));
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::invalid(format!("bad number `{s}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != n_w + n_y {
                return Err(Error::invalid("ragged dataset row"));
            }
            inputs.push(vals[..n_w].to_vec());
            outputs.push(vals[n_w..].to_vec());
        }
        Dataset::new(n_y, n_w - n_y, inputs, outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_nan() {
        let dup = Dataset::new(1, 0, vec![vec![1.0], vec![1.0]], vec![vec![0.0], vec![1.0]]);
        assert!(dup.is_err());
        let nan = Dataset::new(1, 0, vec![vec![f64::NAN]], vec![vec![0.0]]);
        assert!(nan.is_err());
        assert!(Dataset::new(1, 0, vec![], vec![]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = Dataset::new(
            1,
            1,
            vec![vec![0.1, 1.0 / 3.0], vec![2.5e-17, 7.0]],
            vec![vec![std::f64::consts::PI], vec![-1.0]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        d.save_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("w_1,w_2,y_1"));
        assert_eq!(Dataset::load_csv(&p).unwrap(), d);
    }
}
