//! Clustered kernel Lipschitz regression (CKLR) and the kinky-inference
//! baseline.

mod dataset;
pub mod fit;
pub mod kernel;
pub mod kinky;
pub mod kmeans;
pub mod lipschitz;
pub mod predictor;

pub use dataset::Dataset;
pub use fit::{fit_cklr, fit_cluster_weights, sample_voronoi_cell, CklrConfig, FitConfig, FitReport, PriorScope};
pub use kernel::{kernel_eval, RbfKernel};
pub use kinky::{ki_predict, KinkyInference};
pub use kmeans::{assign_cluster, kmeans_fit, ClusterModel};
pub use lipschitz::{estimate_local_lipschitz, estimate_output_lipschitz};
pub use predictor::{CklrPredictor, LipschitzFields, LocalModel};

/// Anything that maps a model input `w` to a predicted successor.
pub trait PointPredictor: Sync {
    fn output_dim(&self) -> usize;
    fn predict_point(&self, w: &[f64], out: &mut [f64]);
}

impl PointPredictor for CklrPredictor {
    fn output_dim(&self) -> usize {
        self.state_dim
    }

    fn predict_point(&self, w: &[f64], out: &mut [f64]) {
        self.predict_into(w, out)
    }
}

impl PointPredictor for KinkyInference {
    fn output_dim(&self) -> usize {
        KinkyInference::output_dim(self)
    }

    fn predict_point(&self, w: &[f64], out: &mut [f64]) {
        self.predict_into(w, out)
    }
}
