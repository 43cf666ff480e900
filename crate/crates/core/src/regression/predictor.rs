use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::kmeans::{nearest, ClusterModel};
use crate::regression::RbfKernel;

/// Kernel expansion fitted on one cluster's data.
///
/// Storage is flat: `inputs` is row-major with `input_width` columns,
/// `outputs` row-major with `output_dim` columns, and `weights[d * len + i]`
/// is the weight of sample `i` for output `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalModel {
    pub input_width: usize,
    pub output_dim: usize,
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
    pub weights: Vec<f64>,
    /// Pairwise (prior) Lipschitz estimate per output coordinate.
    pub prior_lipschitz: Vec<f64>,
    /// Points at which the gradient cap was imposed.
    pub constraint_samples: Vec<Vec<f64>>,
}

impl LocalModel {
    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_width.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_width..(i + 1) * self.input_width]
    }

    pub fn output(&self, i: usize) -> &[f64] {
        &self.outputs[i * self.output_dim..(i + 1) * self.output_dim]
    }

    pub fn weights_for(&self, d: usize) -> &[f64] {
        let n = self.len();
        &self.weights[d * n..(d + 1) * n]
    }

    /// `Σᵢ |ωᵢ|` for output `d`.
    pub fn weight_l1(&self, d: usize) -> f64 {
        self.weights_for(d).iter().map(|w| w.abs()).sum()
    }

    pub fn eval_into(&self, kernel: &RbfKernel, w: &[f64], out: &mut [f64]) {
        let n = self.len();
        let scale = kernel.exponent_scale();
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..n {
            let c = self.input(i);
            let d2: f64 = w.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            let phi = kernel.variance * (d2 * scale).exp();
            for (d, o) in out.iter_mut().enumerate() {
                *o += self.weights[d * n + i] * phi;
            }
        }
    }

    /// Value and Jacobian (`output_dim × input_width`) at `w`.
    pub fn eval_jacobian(&self, kernel: &RbfKernel, w: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.len();
        let p = self.output_dim;
        let mut y = vec![0.0; p];
        let mut jac = DMatrix::zeros(p, self.input_width);
        let inv_l2 = 1.0 / (kernel.length_scale * kernel.length_scale);
        for i in 0..n {
            let c = self.input(i);
            let phi = kernel.eval(w, c);
            for d in 0..p {
                let wt = self.weights[d * n + i];
                y[d] += wt * phi;
                for (k, (a, b)) in w.iter().zip(c).enumerate() {
                    jac[(d, k)] -= wt * phi * (a - b) * inv_l2;
                }
            }
        }
        (y, jac)
    }
}

/// Posterior quantities attached after error analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzFields {
    /// Per-cluster Lipschitz constants (state Jacobian, after inflation).
    pub per_cluster: Vec<f64>,
    pub global: f64,
    pub gap: f64,
}

/// Clustered kernel Lipschitz regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CklrPredictor {
    pub state_dim: usize,
    pub input_dim: usize,
    pub kernel: RbfKernel,
    pub clusters: ClusterModel,
    pub locals: Vec<LocalModel>,
    #[serde(default)]
    pub lipschitz: Option<LipschitzFields>,
}

impl CklrPredictor {
    pub fn input_width(&self) -> usize {
        self.state_dim + self.input_dim
    }

    pub fn k(&self) -> usize {
        self.locals.len()
    }

    pub fn is_fitted(&self) -> bool {
        !self.locals.is_empty() && self.locals.len() == self.clusters.centers.len()
    }

    fn check_query(&self, w: &[f64]) -> Result<()> {
        if !self.is_fitted() {
            return Err(Error::State("predictor has not been fitted".into()));
        }
        if w.len() != self.input_width() {
            return Err(Error::invalid(format!(
                "query has dimension {} but the predictor expects {}",
                w.len(),
                self.input_width()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("query is not finite"));
        }
        Ok(())
    }

    /// Nearest-center routing, lowest index on ties.
    #[inline]
    pub fn route(&self, w: &[f64]) -> usize {
        nearest(&self.clusters.centers, w).0
    }

    pub fn predict(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_query(w)?;
        let mut out = vec![0.0; self.state_dim];
        self.predict_into(w, &mut out);
        Ok(out)
    }

    /// Unchecked hot path.
    #[inline]
    pub fn predict_into(&self, w: &[f64], out: &mut [f64]) {
        let j = self.route(w);
        self.locals[j].eval_into(&self.kernel, w, out);
    }

    /// Prediction of cluster `j`'s expansion regardless of routing.
    pub fn predict_with_cluster(&self, j: usize, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        self.locals[j].eval_into(&self.kernel, w, &mut out);
        out
    }

    /// Value and full Jacobian with respect to `w`, taken on the smooth
    /// branch of the cluster `w` routes to.
    pub fn predict_jacobian(&self, w: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        self.check_query(w)?;
        Ok(self.locals[self.route(w)].eval_jacobian(&self.kernel, w))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Single-cluster predictor over 1-D inputs with the given weights.
    pub fn one_cluster(points: &[f64], weights: &[f64], kernel: RbfKernel) -> CklrPredictor {
        let n = points.len();
        let mean = points.iter().sum::<f64>() / n as f64;
        CklrPredictor {
            state_dim: 1,
            input_dim: 0,
            kernel,
            clusters: ClusterModel {
                centers: vec![vec![mean]],
                assignment: vec![0; n],
                max_iter: 1,
                iterations: 1,
                wcss_history: vec![],
            },
            locals: vec![LocalModel {
                input_width: 1,
                output_dim: 1,
                inputs: points.to_vec(),
                outputs: vec![0.0; n],
                weights: weights.to_vec(),
                prior_lipschitz: vec![0.0],
                constraint_samples: vec![],
            }],
            lipschitz: None,
        }
    }
}
