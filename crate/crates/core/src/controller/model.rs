use nalgebra::DMatrix;

use crate::regression::CklrPredictor;

/// A discrete-time prediction model `x⁺ = f̂(x, u)` in normalized units.
pub trait Model: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    /// Successor together with `∂f̂/∂x` (n×n) and `∂f̂/∂u` (n×m), taken
    /// from the smooth branch active at `(x, u)`.
    fn step_jacobian(&self, x: &[f64], u: &[f64]) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>);
    /// Index of the smooth piece containing `(x, u)`.
    fn region_of(&self, _x: &[f64], _u: &[f64]) -> usize {
        0
    }
}

fn join(x: &[f64], u: &[f64]) -> Vec<f64> {
    let mut w = Vec::with_capacity(x.len() + u.len());
    w.extend_from_slice(x);
    w.extend_from_slice(u);
    w
}

impl Model for CklrPredictor {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        self.predict_into(&join(x, u), &mut out);
        out
    }

    fn step_jacobian(&self, x: &[f64], u: &[f64]) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
        let w = join(x, u);
        let j = self.route(&w);
        let (y, jac) = self.locals[j].eval_jacobian(&self.kernel, &w);
        let n = self.state_dim;
        (
            y,
            jac.columns(0, n).into_owned(),
            jac.columns(n, self.input_dim).into_owned(),
        )
    }

    fn region_of(&self, x: &[f64], u: &[f64]) -> usize {
        self.route(&join(x, u))
    }
}

/// `x⁺ = A x + B u + c`
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub offset: Vec<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        let n = a.nrows();
        Self {
            a,
            b,
            offset: vec![0.0; n],
        }
    }
}

impl Model for LinearModel {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (0..self.a.nrows())
            .map(|r| {
                self.offset[r]
                    + (0..x.len()).map(|c| self.a[(r, c)] * x[c]).sum::<f64>()
                    + (0..u.len()).map(|c| self.b[(r, c)] * u[c]).sum::<f64>()
            })
            .collect()
    }

    fn step_jacobian(&self, x: &[f64], u: &[f64]) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
        (self.step(x, u), self.a.clone(), self.b.clone())
    }
}
