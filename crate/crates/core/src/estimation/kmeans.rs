//! k-means with k-means++ seeding and Lloyd iterations.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Clone, Copy, Debug)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { restarts: 10, max_iter: 100 }
    }
}

#[derive(Clone, Debug)]
pub struct KMeansFit<T> {
    pub labels: Vec<usize>,
    /// Row-major `k × dim`.
    pub centroids: Vec<T>,
    pub cost: T,
    /// Within-cluster sum of squares after each Lloyd step of the winning run.
    pub cost_history: Vec<T>,
}

fn sq_dist<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
}

/// Labels for the `n = points.len() / dim` rows of `points` (row-major).
pub fn kmeans<T: Scalar>(points: &[T], dim: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    Ok(kmeans_with(points, dim, k, seed, KMeansOptions::default())?.labels)
}

pub fn kmeans_with<T: Scalar>(
    points: &[T],
    dim: usize,
    k: usize,
    seed: u64,
    opts: KMeansOptions,
) -> Result<KMeansFit<T>> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::InvalidArgument("points must be a non-empty n × dim matrix".into()));
    }
    let n = points.len() / dim;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in [1, n = {n}]")));
    }
    let mut best: Option<KMeansFit<T>> = None;
    for r in 0..opts.restarts.max(1) {
        let fit = lloyd(points, dim, k, seed::derive(seed, &[seed::tag::KMEANS, r as u64]), opts.max_iter);
        if fit.labels_cover(k) && best.as_ref().is_none_or(|b| fit.cost < b.cost) {
            best = Some(fit);
        }
    }
    best.ok_or(Error::KMeansEmptyCluster(opts.restarts))
}

impl<T> KMeansFit<T> {
    fn labels_cover(&self, k: usize) -> bool {
        let mut seen = vec![false; k];
        self.labels.iter().for_each(|&l| seen[l] = true);
        seen.into_iter().all(|s| s)
    }
}

fn plus_plus<T: Scalar>(points: &[T], dim: usize, k: usize, key: u64) -> Vec<T> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = seed::rng(key);
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(row(rng.random_range(0..n)));
    let mut d2: Vec<T> = (0..n).map(|i| sq_dist(row(i), &centroids[..dim])).collect();
    for c in 1..k {
        let total: T = d2.iter().copied().sum();
        let pick = if total > T::zero() {
            let target = T::of_f64(rng.random::<f64>()) * total;
            let mut acc = T::zero();
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc = acc + w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.extend_from_slice(row(pick));
        let new_c = &centroids[c * dim..(c + 1) * dim];
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), new_c));
        }
    }
    centroids
}

fn lloyd<T: Scalar>(points: &[T], dim: usize, k: usize, key: u64, max_iter: usize) -> KMeansFit<T> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = plus_plus(points, dim, k, key);
    let mut labels = vec![usize::MAX; n];
    let mut dist = vec![T::zero(); n];
    let mut history = Vec::new();

    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for i in 0..n {
            let (mut best, mut best_d) = (0, T::infinity());
            for c in 0..k {
                let d = sq_dist(row(i), &centroids[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
            dist[i] = best_d;
        }

        // Empty cluster: move the point farthest from its centroid (taken from
        // a cluster with at least two points) into it.
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a)));
            if let Some(i) = far {
                counts[labels[i]] -= 1;
                counts[c] = 1;
                labels[i] = c;
                dist[i] = T::zero();
                centroids[c * dim..(c + 1) * dim].copy_from_slice(row(i));
                changed = true;
            }
        }

        let mut sums = vec![T::zero(); k * dim];
        for i in 0..n {
            let c = labels[i];
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s = *s + x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let cnt = T::of_usize(counts[c]);
                for d in 0..dim {
                    centroids[c * dim + d] = sums[c * dim + d] / cnt;
                }
            }
        }
        let cost = (0..n)
            .map(|i| sq_dist(row(i), &centroids[labels[i] * dim..(labels[i] + 1) * dim]))
            .sum();
        history.push(cost);
        if !changed {
            break;
        }
    }
    let cost = *history.last().expect("at least one iteration");
    KMeansFit { labels, centroids, cost, cost_history: history }
}
