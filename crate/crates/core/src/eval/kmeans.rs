//! Lloyd's k-means with uniform random initialization and restarts.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::synth::derive_seed;

const MAX_LLOYD_ITERS: usize = 1000;

/// Outcome of one Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares.
    pub inertia: f64,
    /// Inertia after every assignment and every centroid update.
    pub trace: Vec<f64>,
}

/// Best of several restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub best: KMeansRun,
    pub best_restart: usize,
    pub restart_inertias: Vec<f64>,
}

impl KMeansResult {
    pub fn assignment(&self) -> &[usize] {
        &self.best.assignment
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.best.centroids
    }

    pub fn inertia(&self) -> f64 {
        self.best.inertia
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Lloyd iterations from the given initial centroids until the assignment is
/// stable. Empty clusters are re-seeded with the point farthest from its
/// current centroid.
pub fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeansRun {
    let k = centroids.len();
    let dim = points.first().map_or(0, Vec::len);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut trace = vec![inertia(points, &centroids, &assignment)];

    for _ in 0..MAX_LLOYD_ITERS {
        // fill empty clusters
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..points.len())
                .filter(|&i| counts[assignment[i]] > 1)
                .max_by(|&i, &j| {
                    let di = sq_dist(&points[i], &centroids[assignment[i]]);
                    let dj = sq_dist(&points[j], &centroids[assignment[j]]);
                    di.total_cmp(&dj).then(j.cmp(&i))
                });
            if let Some(i) = far {
                counts[assignment[i]] -= 1;
                assignment[i] = c;
                counts[c] = 1;
                centroids[c] = points[i].clone();
            }
        }

        // centroid update
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignment) {
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        trace.push(inertia(points, &centroids, &assignment));

        // assignment update; keep the current cluster on ties
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let cur = assignment[i];
            let n = nearest(p, &centroids);
            if n != cur && sq_dist(p, &centroids[n]) < sq_dist(p, &centroids[cur]) {
                assignment[i] = n;
                changed = true;
            }
        }
        trace.push(inertia(points, &centroids, &assignment));
        if !changed {
            break;
        }
    }
    let inertia = *trace.last().unwrap();
    KMeansRun {
        assignment,
        centroids,
        inertia,
        trace,
    }
}

/// Best-of-`restarts` k-means; restart `r` draws its initial centroids
/// uniformly without replacement from the data using a seed derived from
/// `(seed, r)`. Ties in inertia go to the smaller restart index.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::Config("k-means needs k ≥ 1".into()));
    }
    if k > points.len() {
        return Err(Error::Config(format!(
            "k-means with k={k} but only {} points",
            points.len()
        )));
    }
    if restarts == 0 {
        return Err(Error::Config("k-means needs at least one restart".into()));
    }
    let mut best: Option<(usize, KMeansRun)> = None;
    let mut restart_inertias = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
        let init = sample(&mut rng, points.len(), k)
            .into_iter()
            .map(|i| points[i].clone())
            .collect();
        let run = lloyd(points, init);
        restart_inertias.push(run.inertia);
        if best.as_ref().is_none_or(|(_, b)| run.inertia < b.inertia) {
            best = Some((r, run));
        }
    }
    let (best_restart, best) = best.unwrap();
    Ok(KMeansResult {
        best,
        best_restart,
        restart_inertias,
    })
}
