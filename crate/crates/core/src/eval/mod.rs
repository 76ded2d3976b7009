//! Reference estimators with trajectory access, and the error metrics used
//! to compare any estimate against ground truth.
//!
//! The oracle knows every particle's trajectory and ensemble; the semi-oracle
//! knows trajectories but has to cluster per-trajectory fits with k-means.

pub mod kmeans;

use itertools::Itertools;

use crate::dynamics::{fit_weighted, AffineModel, ModelKind, WeightedMoments, WeightedPair};
use crate::error::{Error, Result};
use crate::measures::Point;

pub use kmeans::{kmeans, lloyd, KMeansResult, KMeansRun};

/// Largest `K` accepted by [`match_permutation`] (exhaustive search over `K!`).
pub const MAX_MATCH_ENSEMBLES: usize = 8;

/// Particle trajectories with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    trajectories: Vec<Vec<Point>>,
    pub labels: Option<Vec<usize>>,
    pub models: Option<Vec<AffineModel>>,
}

impl TrajectorySet {
    pub fn new(
        trajectories: Vec<Vec<Point>>,
        labels: Option<Vec<usize>>,
        models: Option<Vec<AffineModel>>,
    ) -> Result<Self> {
        let horizon = trajectories.first().map_or(0, Vec::len);
        let dim = trajectories
            .first()
            .and_then(|t| t.first())
            .map_or(0, Point::dim);
        if trajectories.is_empty() || horizon < 2 {
            return Err(Error::Shape("need at least one trajectory of length ≥ 2".into()));
        }
        for (p, tr) in trajectories.iter().enumerate() {
            if tr.len() != horizon || tr.iter().any(|x| x.dim() != dim) {
                return Err(Error::Shape(format!(
                    "trajectory {p} does not have length {horizon} and dimension {dim}"
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != trajectories.len() {
                return Err(Error::Shape(format!(
                    "{} labels for {} trajectories",
                    l.len(),
                    trajectories.len()
                )));
            }
        }
        Ok(Self {
            trajectories,
            labels,
            models,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn dim(&self) -> usize {
        self.trajectories[0][0].dim()
    }

    pub fn trajectories(&self) -> &[Vec<Point>] {
        &self.trajectories
    }

    fn pairs(&self, p: usize) -> impl Iterator<Item = WeightedPair<'_>> {
        self.trajectories[p]
            .windows(2)
            .map(|w| WeightedPair::new(&w[0], &w[1], 1.0))
    }

    /// Pooled least squares over all consecutive pairs of the given particles.
    pub fn pooled_fit(&self, members: impl IntoIterator<Item = usize>, kind: ModelKind) -> Result<AffineModel> {
        let mut moments = WeightedMoments::new(self.dim());
        for p in members {
            for pair in self.pairs(p) {
                moments.add(pair.x, pair.y, pair.w)?;
            }
        }
        moments.fit(kind)
    }

    /// Least squares on one particle's own transitions.
    pub fn single_fit(&self, p: usize, kind: ModelKind) -> Result<AffineModel> {
        fit_weighted(&self.pairs(p).collect::<Vec<_>>(), kind)
    }
}

/// Least-squares estimate per true ensemble (labels required).
pub fn oracle_fit(trajs: &TrajectorySet, kind: ModelKind) -> Result<Vec<AffineModel>> {
    let labels = trajs
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("oracle estimator needs ensemble labels".into()))?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    (0..k)
        .map(|c| trajs.pooled_fit(labels.iter().positions(|&l| l == c), kind))
        .collect()
}

/// Semi-oracle output.
#[derive(Debug, Clone)]
pub struct SemiOracleFit {
    pub models: Vec<AffineModel>,
    /// Cluster index per trajectory.
    pub labels: Vec<usize>,
    pub clustering: KMeansResult,
}

/// Per-trajectory fits, k-means on the parameter vectors, then a pooled
/// re-fit per cluster.
pub fn semi_oracle_fit(
    trajs: &TrajectorySet,
    k: usize,
    kind: ModelKind,
    kmeans_restarts: usize,
    seed: u64,
) -> Result<SemiOracleFit> {
    if k > trajs.len() {
        return Err(Error::Config(format!(
            "{k} ensembles but only {} trajectories",
            trajs.len()
        )));
    }
    let thetas = (0..trajs.len())
        .map(|p| trajs.single_fit(p, kind).map(|m| m.params()))
        .collect::<Result<Vec<_>>>()?;
    let clustering = kmeans(&thetas, k, kmeans_restarts, seed)?;
    let labels = clustering.assignment().to_vec();
    let models = (0..k)
        .map(|c| trajs.pooled_fit(labels.iter().positions(|&l| l == c), kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(SemiOracleFit {
        models,
        labels,
        clustering,
    })
}

/// Comparison of an estimate with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `permutation[k]` is the estimated ensemble matched to true ensemble `k`.
    pub permutation: Vec<usize>,
    pub param_sq_error: f64,
    pub classification_accuracy: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "permutation,param_sq_error,classification_accuracy";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{}",
            self.permutation.iter().join(" "),
            crate::measures::fmt_f64(self.param_sq_error),
            crate::measures::fmt_f64(self.classification_accuracy)
        )
    }
}

/// Alignment of estimated to true ensembles minimizing `Σ_k ‖θ̂_{π(k)} − θ_k‖²`.
///
/// Returns `(π, error)`; among equal errors the lexicographically first
/// permutation wins.
pub fn match_permutation(estimated: &[AffineModel], truth: &[AffineModel]) -> Result<(Vec<usize>, f64)> {
    let k = truth.len();
    if estimated.len() != k {
        return Err(Error::Shape(format!(
            "{} estimated models vs {k} true models",
            estimated.len()
        )));
    }
    if k > MAX_MATCH_ENSEMBLES {
        return Err(Error::Config(format!(
            "permutation matching supports at most {MAX_MATCH_ENSEMBLES} ensembles, got {k}"
        )));
    }
    for (e, t) in estimated.iter().zip(truth) {
        if e.dim() != t.dim() || e.kind() != t.kind() {
            return Err(Error::Shape("estimated and true models differ in kind or dimension".into()));
        }
    }
    let dist: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| estimated.iter().map(|e| e.sq_distance(t)).collect())
        .collect();
    let mut best = ((0..k).collect::<Vec<_>>(), f64::INFINITY);
    for perm in (0..k).permutations(k) {
        let err: f64 = perm.iter().enumerate().map(|(t, &e)| dist[t][e]).sum();
        if err < best.1 {
            best = (perm, err);
        }
    }
    Ok(best)
}

/// Fraction of entries whose predicted ensemble is the one matched to the
/// true ensemble by `permutation`.
pub fn classification_accuracy(
    predicted: &[Vec<usize>],
    truth: &[Vec<usize>],
    permutation: &[usize],
) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.iter().zip(truth).any(|(p, t)| p.len() != t.len()) {
        return Err(Error::Shape("predicted and true label tables differ in shape".into()));
    }
    let mut total = 0usize;
    let mut correct = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        for (&pl, &tl) in p.iter().zip(t) {
            total += 1;
            if permutation.get(tl) == Some(&pl) {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Shape("no labels to compare".into()));
    }
    Ok(correct as f64 / total as f64)
}

/// Both metrics with one shared alignment.
pub fn evaluate(
    estimated: &[AffineModel],
    predicted: &[Vec<usize>],
    true_models: &[AffineModel],
    true_labels: &[Vec<usize>],
) -> Result<EvalReport> {
    let (permutation, param_sq_error) = match_permutation(estimated, true_models)?;
    let classification_accuracy = classification_accuracy(predicted, true_labels, &permutation)?;
    Ok(EvalReport {
        permutation,
        param_sq_error,
        classification_accuracy,
    })
}
