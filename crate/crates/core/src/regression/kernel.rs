use serde::{Deserialize, Serialize};

/// Squared-exponential kernel `σ² exp(-|w - w_i|² / (2 l²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub variance: f64,
    pub length_scale: f64,
}

impl RbfKernel {
    pub fn new(variance: f64, length_scale: f64) -> crate::Result<Self> {
        if !(variance > 0.0 && length_scale > 0.0) || !variance.is_finite() || !length_scale.is_finite() {
            return Err(crate::Error::invalid("kernel parameters must be positive and finite"));
        }
        Ok(Self {
            variance,
            length_scale,
        })
    }

    /// `-1 / (2 l²)`
    #[inline]
    pub fn exponent_scale(&self) -> f64 {
        -0.5 / (self.length_scale * self.length_scale)
    }

    #[inline]
    pub fn eval(&self, w: &[f64], center: &[f64]) -> f64 {
        let d2: f64 = w.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        self.variance * (d2 * self.exponent_scale()).exp()
    }

    /// Gradient with respect to `w`: `-φ (w - w_i) / l²`.
    pub fn gradient(&self, w: &[f64], center: &[f64], out: &mut [f64]) -> f64 {
        let phi = self.eval(w, center);
        let s = -phi / (self.length_scale * self.length_scale);
        for ((o, a), b) in out.iter_mut().zip(w).zip(center) {
            *o = s * (a - b);
        }
        phi
    }
}

pub fn kernel_eval(w: &[f64], center: &[f64], variance: f64, length_scale: f64) -> f64 {
    RbfKernel {
        variance,
        length_scale,
    }
    .eval(w, center)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_distance_returns_variance() {
        assert_eq!(kernel_eval(&[1.0, 2.0], &[1.0, 2.0], 2.5, 0.3), 2.5);
    }

    #[test]
    fn distance_equal_to_length_scale() {
        let v = kernel_eval(&[5.0], &[0.0], 1.0, 5.0);
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn far_points_vanish() {
        assert!(kernel_eval(&[50.0], &[0.0], 1.0, 1.0) < 1e-300);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let k = RbfKernel::new(1.3, 0.7).unwrap();
        let c = [0.2, -0.4, 1.0];
        let w = [0.5, 0.1, 0.3];
        let mut g = [0.0; 3];
        k.gradient(&w, &c, &mut g);
        for i in 0..3 {
            let h = 1e-6;
            let mut wp = w;
            let mut wm = w;
            wp[i] += h;
            wm[i] -= h;
            let fd = (k.eval(&wp, &c) - k.eval(&wm, &c)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
