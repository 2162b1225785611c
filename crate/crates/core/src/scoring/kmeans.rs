//! k-means distance scorer with silhouette model selection.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_K: usize = 20;
const MAX_ITERS: usize = 100;
/// Silhouettes are evaluated on at most this many (evenly strided) points.
const SILHOUETTE_SAMPLE: usize = 2000;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansScorer {
    centroids: Vec<Vec<f64>>,
    silhouette: f64,
}

struct Clustering {
    centroids: Vec<Vec<f64>>,
    assignment: Vec<usize>,
    inertia: f64,
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(k, c)| (k, sq_dist(c, p)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.below(points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.below(points.len())
        };
        centroids.push(points[idx].clone());
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> Clustering {
    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (p, a) in points.iter().zip(assignment.iter_mut()) {
            let (k, _) = nearest(&centroids, p);
            if *a != k {
                *a = k;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (k, c) in centroids.iter_mut().enumerate() {
            if counts[k] > 0 {
                for (ci, s) in c.iter_mut().zip(&sums[k]) {
                    *ci = s / counts[k] as f64;
                }
            }
        }
    }
    let inertia = points.iter().zip(&assignment).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    Clustering { centroids, assignment, inertia }
}

/// Mean silhouette over `sample` (indices into the distance matrix).
fn silhouette(dist: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let n = labels.len();
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dist[i][j];
            }
        }
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 && b.is_finite() {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

impl KMeansScorer {
    /// Fits k-means for every `K` in `2..=max_k` (skipping `K` larger than
    /// the number of distinct points) and keeps the `K` with the highest
    /// mean silhouette. Points are sorted first, so the result does not
    /// depend on their input order.
    pub fn fit(points: &[Vec<f64>], max_k: usize, restarts: usize, seed: u64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Fit("k-means needs at least two points".into()));
        }
        let mut sorted: Vec<Vec<f64>> = points.to_vec();
        sorted.sort_by(|a, b| {
            a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(core::cmp::Ordering::Equal)
        });
        let mut distinct = sorted.clone();
        distinct.dedup();

        let stride = sorted.len().div_ceil(SILHOUETTE_SAMPLE);
        let sample: Vec<usize> = (0..sorted.len()).step_by(stride).collect();
        let dist: Vec<Vec<f64>> = sample
            .iter()
            .map(|&i| sample.iter().map(|&j| libm::sqrt(sq_dist(&sorted[i], &sorted[j]))).collect())
            .collect();

        let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
        for k in 2..=max_k.max(2) {
            if k > distinct.len() {
                break;
            }
            let mut best_fit: Option<Clustering> = None;
            for r in 0..restarts.max(1) {
                let mut rng = SeededRng::derived(seed, (k * 1000 + r) as u64);
                let fit = lloyd(&sorted, kmeans_pp(&sorted, k, &mut rng));
                if best_fit.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
                    best_fit = Some(fit);
                }
            }
            let fit = best_fit.expect("at least one restart");
            let labels: Vec<usize> = sample.iter().map(|&i| fit.assignment[i]).collect();
            let s = silhouette(&dist, &labels, k);
            if best.as_ref().is_none_or(|(bs, _)| s > *bs) {
                best = Some((s, fit.centroids));
            }
        }
        let (silhouette, centroids) =
            best.ok_or_else(|| Error::Fit("need at least two distinct points for k-means".into()))?;
        Ok(Self { centroids, silhouette })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn silhouette(&self) -> f64 {
        self.silhouette
    }

    /// Euclidean distance to the nearest centroid.
    pub fn score(&self, x: &[f64]) -> f64 {
        libm::sqrt(nearest(&self.centroids, x).1)
    }
}
