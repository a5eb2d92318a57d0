//! Conventional clustering baseline: Lloyd's k-means with k-means++ seeding.
//!
//! Centers are the per-cluster Euclidean means. The cover they induce is
//! scored with the same hard ℓ∞ criterion as every other algorithm.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cover::{coverage_stats, Algorithm, CoverSolution};
use crate::error::{Error, Result};
use crate::task_space::{TaskParams, TaskSet};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by at most `max_iters` Lloyd iterations.
pub fn kmeans_centers(tasks: &TaskSet, k: usize, max_iters: usize, seed: u64) -> Result<Vec<TaskParams>> {
    if k == 0 {
        return Err(Error::Precondition("K must be >= 1".into()));
    }
    let n = tasks.len();
    if n == 0 {
        return Err(Error::Precondition("task set is empty".into()));
    }
    let d = tasks.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers: Vec<Vec<f64>> = vec![tasks.point(rng.random_range(0..n)).to_vec()];
    while centers.len() < k.min(n) {
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                centers
                    .iter()
                    .map(|c| sq_dist(tasks.point(i), c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(w) => w.sample(&mut rng),
            // every point already sits on a center
            Err(_) => break,
        };
        centers.push(tasks.point(next).to_vec());
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let best = (0..centers.len())
                .min_by(|&a, &b| {
                    sq_dist(tasks.point(i), &centers[a]).total_cmp(&sq_dist(tasks.point(i), &centers[b]))
                })
                .expect("non-empty centers");
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(tasks.point(i)) {
                *s += x;
            }
        }
        for ((c, sum), &cnt) in centers.iter_mut().zip(sums).zip(&counts) {
            if cnt > 0 {
                *c = sum.into_iter().map(|v| v / cnt as f64).collect();
            }
        }
    }
    centers.into_iter().map(TaskParams::new).collect()
}

/// Scores the k-means centers as an ℓ∞ ε-cover.
pub fn kmeans_cover(tasks: &TaskSet, epsilon: f64, k: usize, seed: u64) -> Result<CoverSolution> {
    let centers = kmeans_centers(tasks, k, 100, seed)?;
    Ok(coverage_stats(tasks, &centers, epsilon)?.with_algorithm(Algorithm::Kmeans))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_obvious_clusters() {
        let ts = TaskSet::from_rows(vec![vec![0.0], vec![0.2], vec![10.0], vec![10.2]]).unwrap();
        let mut c: Vec<f64> = kmeans_centers(&ts, 2, 50, 1)
            .unwrap()
            .into_iter()
            .map(|t| t.as_slice()[0])
            .collect();
        c.sort_by(f64::total_cmp);
        assert!((c[0] - 0.1).abs() < 1e-12 && (c[1] - 10.1).abs() < 1e-12);
    }

    #[test]
    fn outlier_pulls_a_center_off_the_modes() {
        // With K=2 one center is spent on the outlier and the other lands
        // between the two pairs, covering nothing at ε=1.
        let ts = TaskSet::from_rows(vec![vec![10.0], vec![12.0], vec![20.0], vec![22.0], vec![100.0]]).unwrap();
        let sol = kmeans_cover(&ts, 1.0, 2, 0).unwrap();
        assert_eq!(sol.covered_count, 1);
    }
}
