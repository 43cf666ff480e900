//! Lloyd's algorithm with k-means++ seeding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::Dataset;
use crate::rng::{stream_rng, tags};

/// Center shift (max-norm) below which Lloyd iterations stop.
pub const CENTER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centers: Vec<Vec<f64>>,
    /// Cluster index of every training sample.
    pub assignment: Vec<usize>,
    pub max_iter: usize,
    pub iterations: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss_history: Vec<f64>,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center, lowest index on ties.
pub(crate) fn nearest(centers: &[Vec<f64>], w: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(w, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    /// Routes `w` to its nearest center.
    pub fn assign(&self, w: &[f64]) -> Result<usize> {
        assign_cluster(w, self)
    }

    pub fn members(&self, j: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == j)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn assign_cluster(w: &[f64], model: &ClusterModel) -> Result<usize> {
    if model.centers.is_empty() {
        return Err(Error::State("cluster model has no centers".into()));
    }
    if w.len() != model.dim() {
        return Err(Error::invalid(format!(
            "query has dimension {} but centers have {}",
            w.len(),
            model.dim()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("query is not finite"));
    }
    Ok(nearest(&model.centers, w).0)
}

fn assign_all(points: &[Vec<f64>], centers: &[Vec<f64>], out: &mut [usize]) -> f64 {
    let mut wcss = 0.0;
    for (a, p) in out.iter_mut().zip(points) {
        let (j, d) = nearest(centers, p);
        *a = j;
        wcss += d;
    }
    wcss
}

/// Moves every empty cluster onto the point farthest from its own center.
/// Returns true if anything was moved.
fn reseed_empty(points: &[Vec<f64>], centers: &mut [Vec<f64>], assignment: &mut [usize]) -> bool {
    let k = centers.len();
    let mut moved = false;
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return moved;
        };
        // farthest point from its center, among clusters that can spare one
        let (far, _) = points
            .iter()
            .enumerate()
            .filter(|(i, _)| counts[assignment[*i]] > 1)
            .map(|(i, p)| (i, sq_dist(p, &centers[assignment[i]])))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if far == usize::MAX {
            return moved;
        }
        centers[empty] = points[far].clone();
        assign_all(points, centers, assignment);
        moved = true;
    }
}

/// Partitions the dataset inputs into `k` clusters.
///
/// Seeding is k-means++ (D²-weighted) from `seed`; iterations alternate
/// nearest-center assignment and mean updates until centers move less than
/// [`CENTER_TOL`] or `max_iter` iterations elapse.
pub fn kmeans_fit(dataset: &Dataset, k: usize, max_iter: usize, seed: u64) -> Result<ClusterModel> {
    let points = dataset.inputs();
    kmeans_points(points, k, max_iter, seed)
}

pub fn kmeans_points(points: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> Result<ClusterModel> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 <= K <= N_D, got K={k}, N_D={n}")));
    }
    if max_iter == 0 {
        return Err(Error::invalid("iteration cap must be at least 1"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite data"));
    }
    let dim = points[0].len();

    let mut rng = stream_rng(seed, tags::KMEANS_INIT, 0);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centers.last().unwrap()));
        }
    }

    let mut assignment = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        history.push(assign_all(points, &centers, &mut assignment));
        if reseed_empty(points, &mut centers, &mut assignment) {
            *history.last_mut().unwrap() = assignment
                .iter()
                .zip(points)
                .map(|(&a, p)| sq_dist(p, &centers[a]))
                .sum();
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            for (c, s) in centers[j].iter_mut().zip(&sums[j]) {
                let next = s / counts[j] as f64;
                shift = shift.max((next - *c).abs());
                *c = next;
            }
        }
        if shift < CENTER_TOL {
            break;
        }
    }
    // final assignment against the final centers
    history.push(assign_all(points, &centers, &mut assignment));
    if reseed_empty(points, &mut centers, &mut assignment) {
        history.push(
            assignment
                .iter()
                .zip(points)
                .map(|(&a, p)| sq_dist(p, &centers[a]))
                .sum(),
        );
    }

    Ok(ClusterModel {
        centers,
        assignment,
        max_iter,
        iterations,
        wcss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_d(xs: &[f64]) -> Dataset {
        Dataset::new(
            1,
            0,
            xs.iter().map(|&x| vec![x]).collect(),
            xs.iter().map(|_| vec![0.0]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let d = Dataset::new(
            1,
            1,
            vec![vec![0.0, 1.0], vec![2.0, 5.0], vec![4.0, 0.0]],
            vec![vec![0.0]; 3],
        )
        .unwrap();
        let m = kmeans_fit(&d, 1, 10, 3).unwrap();
        assert!((m.centers[0][0] - 2.0).abs() < 1e-15);
        assert!((m.centers[0][1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn two_separated_groups() {
        let d = one_d(&[0.0, 0.1, 9.9, 10.0]);
        for seed in 0..10 {
            let m = kmeans_fit(&d, 2, 50, seed).unwrap();
            let mut c: Vec<f64> = m.centers.iter().map(|c| c[0]).collect();
            c.sort_by(f64::total_cmp);
            assert!((c[0] - 0.05).abs() < 1e-12, "seed {seed}: {c:?}");
            assert!((c[1] - 9.95).abs() < 1e-12);
        }
    }

    #[test]
    fn too_many_clusters_rejected() {
        let d = one_d(&[0.0, 1.0, 2.0]);
        assert!(matches!(kmeans_fit(&d, 5, 10, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn assignment_ties_go_to_lowest_index() {
        let m = ClusterModel {
            centers: vec![vec![0.0], vec![10.0]],
            assignment: vec![],
            max_iter: 1,
            iterations: 0,
            wcss_history: vec![],
        };
        assert_eq!(m.assign(&[2.0]).unwrap(), 0);
        assert_eq!(m.assign(&[5.0]).unwrap(), 0);
        assert_eq!(m.assign(&[7.0]).unwrap(), 1);
        assert!(m.assign(&[1.0, 2.0]).is_err());
        let single = ClusterModel {
            centers: vec![vec![3.0]],
            ..m
        };
        assert_eq!(single.assign(&[-100.0]).unwrap(), 0);
    }

    proptest! {
        #[test]
        fn lloyd_is_monotone_and_clusters_nonempty(
            pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 8..60),
            k in 1usize..6,
            seed in 0u64..1000,
        ) {
            let mut inputs: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a, b]).collect();
            inputs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            inputs.dedup();
            prop_assume!(inputs.len() >= k);
            let outputs = vec![vec![0.0]; inputs.len()];
            let d = Dataset::new(1, 1, inputs, outputs).unwrap();
            let m = kmeans_fit(&d, k, 100, seed).unwrap();
            for w in m.wcss_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
            }
            for j in 0..k {
                prop_assert!(!m.members(j).is_empty());
            }
            for (i, p) in d.inputs().iter().enumerate() {
                prop_assert_eq!(m.assignment[i], nearest(&m.centers, p).0);
            }
        }
    }
}
