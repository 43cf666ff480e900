//! Axis-aligned boxes over stacked `[x; u]` coordinates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Set when an erosion consumed the whole box.
    #[serde(default)]
    pub empty: bool,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::invalid("box bounds have different lengths"));
        }
        if lower.iter().chain(&upper).any(|v| v.is_nan()) {
            return Err(Error::invalid("box bounds contain NaN"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::invalid("box lower bound exceeds upper bound"));
        }
        Ok(Self {
            lower,
            upper,
            empty: false,
        })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
            empty: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        !self.empty && self.violation(p) <= 0.0
    }

    /// Largest coordinate-wise distance outside the box (0 when inside).
    pub fn violation(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Sub-box over the coordinate range `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> BoxSet {
        BoxSet {
            lower: self.lower[range.clone()].to_vec(),
            upper: self.upper[range].to_vec(),
            empty: self.empty,
        }
    }

    /// Shrinks the first `n` coordinates by `margin` on each side; the rest
    /// are left alone. Flags the result empty if any side crosses over.
    pub fn shrink_leading(&self, n: usize, margin: f64) -> BoxSet {
        let mut out = self.clone();
        for i in 0..n.min(self.dim()) {
            out.lower[i] += margin;
            out.upper[i] -= margin;
            if out.lower[i] > out.upper[i] {
                out.empty = true;
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| l + (u - l) * rng.random::<f64>())
            .collect()
    }

    pub fn project(&self, p: &mut [f64]) {
        for (v, (&l, &u)) in p.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(l, u);
        }
    }

    /// All `2^d` vertices (only used for small `d`).
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            self.upper[i]
                        } else {
                            self.lower[i]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrink_only_leading_coordinates() {
        let b = BoxSet::unit(3).shrink_leading(2, 0.1);
        assert_eq!(b.lower, vec![0.1, 0.1, 0.0]);
        assert!((b.upper[0] - 0.9).abs() < 1e-15);
        assert_eq!(b.upper[2], 1.0);
        assert!(!b.empty);
        assert!(BoxSet::unit(2).shrink_leading(1, 0.6).empty);
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(BoxSet::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn corners_enumerate_all_vertices() {
        let b = BoxSet::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        let c = b.corners();
        assert_eq!(c.len(), 4);
        assert!(c.contains(&vec![2.0, -1.0]));
    }
}
