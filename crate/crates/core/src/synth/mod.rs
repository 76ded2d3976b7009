//! Synthetic data: multi-ensemble affine systems observed as unlabeled
//! snapshots, and the one-dimensional Gaussian-mixture shift example.
//!
//! All randomness comes from `ChaCha8Rng` (crate `rand_chacha` 0.9) with
//! normal variates from `rand_distr::StandardNormal` (0.5); both are pinned in
//! `Cargo.lock`, so a seed fully determines a dataset.

mod sweep;

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{AffineModel, ModelKind};
use crate::error::{Error, Result};
use crate::eval::TrajectorySet;
use crate::measures::{DiscreteMeasure, ObservationSequence, Point, Truth};

pub use sweep::{
    aggregate, default_sigma2_grid, log_grid, monte_carlo_sweep, percentile, read_sweep_csv, run_method,
    write_aggregate_csv, write_sweep_csv, AggregateRow, Method, Summary, SweepConfig, SweepRecord,
};

/// Mixes `parts` into `base` with SplitMix64 finalization.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// Simulation settings; defaults give three ensembles of 10, 12 and 15
/// particles in the plane, observed at 7 instants with noise variance 1e-3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dim: usize,
    pub sizes: Vec<usize>,
    pub horizon: usize,
    pub sigma2: f64,
    pub dynamics_scale: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            sizes: vec![10, 12, 15],
            horizon: 7,
            sigma2: 1e-3,
            dynamics_scale: 1.0,
            init_scale: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn ensembles(&self) -> usize {
        self.sizes.len()
    }

    pub fn particles(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::Config(format!(
                "ensemble sizes must be positive, got {:?}",
                self.sizes
            )));
        }
        if self.horizon < 2 {
            return Err(Error::Config("need at least 2 time points".into()));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Config(format!("invalid noise variance {}", self.sigma2)));
        }
        for (name, v) in [("dynamics_scale", self.dynamics_scale), ("init_scale", self.init_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// A simulated dataset with its trajectories.
#[derive(Debug, Clone)]
pub struct Instance {
    pub observations: ObservationSequence,
    pub trajectories: TrajectorySet,
}

/// Draws dynamics, initial states and noisy trajectories, then shuffles each
/// snapshot so that point order carries no identity information.
pub fn sample_instance(cfg: &SimConfig) -> Result<Instance> {
    cfg.validate()?;
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let models: Vec<AffineModel> = (0..cfg.ensembles())
        .map(|_| AffineModel::random(ModelKind::Affine, d, cfg.dynamics_scale, &mut rng))
        .collect();
    let noise_sd = cfg.sigma2.sqrt();

    let mut trajectories = Vec::with_capacity(cfg.particles());
    let mut labels = Vec::with_capacity(cfg.particles());
    for (k, &n) in cfg.sizes.iter().enumerate() {
        for _ in 0..n {
            let x0: Vec<f64> = (0..d)
                .map(|_| cfg.init_scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut tr = vec![Point(x0)];
            for _ in 1..cfg.horizon {
                let mut next = models[k].apply(tr.last().unwrap())?;
                if noise_sd > 0.0 {
                    for v in next.0.iter_mut() {
                        *v += noise_sd * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                tr.push(next);
            }
            trajectories.push(tr);
            labels.push(k);
        }
    }

    let mut measures = Vec::with_capacity(cfg.horizon);
    let mut ids = Vec::with_capacity(cfg.horizon);
    let mut snapshot_labels = Vec::with_capacity(cfg.horizon);
    for t in 0..cfg.horizon {
        let mut order: Vec<usize> = (0..trajectories.len()).collect();
        order.shuffle(&mut rng);
        measures.push(DiscreteMeasure::uniform(
            order.iter().map(|&p| trajectories[p][t].clone()).collect(),
        )?);
        ids.push(order.iter().map(|&p| p as i64).collect());
        snapshot_labels.push(order.iter().map(|&p| labels[p]).collect());
    }
    let observations = ObservationSequence::with_metadata(
        measures,
        ids,
        Truth {
            labels: Some(snapshot_labels),
            models: Some(models.clone()),
        },
    )?;
    let trajectories = TrajectorySet::new(trajectories, Some(labels), Some(models))?;
    Ok(Instance {
        observations,
        trajectories,
    })
}

/// Two-component mixtures with swapped mode locations:
/// `μ = p N(a, σ) + p' N(a', σ')` and `ν = p' N(a, σ') + p N(a', σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub p: f64,
    pub p_prime: f64,
    pub a: f64,
    pub a_prime: f64,
    pub sigma: f64,
    pub sigma_prime: f64,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            p: 0.4,
            p_prime: 0.6,
            a: 0.0,
            a_prime: 4.0,
            sigma: 0.5,
            sigma_prime: 0.3,
            lo: -3.0,
            hi: 7.0,
            points: 200,
        }
    }
}

impl GmmConfig {
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    /// Shifts moving each mode of `μ` onto its counterpart in `ν`.
    pub fn true_shifts(&self) -> [f64; 2] {
        [self.a_prime - self.a, self.a - self.a_prime]
    }

    fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::Config(format!("grid needs at least 2 points, got {}", self.points)));
        }
        if !(self.lo < self.hi) {
            return Err(Error::Config(format!("grid bounds must satisfy lo < hi, got [{}, {}]", self.lo, self.hi)));
        }
        if !(self.p > 0.0 && self.p_prime > 0.0) {
            return Err(Error::Config("mixture weights must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma_prime > 0.0) {
            return Err(Error::Config("standard deviations must be positive".into()));
        }
        if ![self.p, self.p_prime, self.a, self.a_prime, self.sigma, self.sigma_prime, self.lo, self.hi]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Config("non-finite mixture parameter".into()));
        }
        Ok(())
    }
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

/// Grid discretization (density × cell width) of the two mixtures, both
/// rescaled to total mass `p + p'` and made bitwise equal in total.
///
/// Fails if either discretized mixture misses more than 1e-6 of its mass.
pub fn gmm_example(cfg: &GmmConfig) -> Result<ObservationSequence> {
    cfg.validate()?;
    let h = cfg.spacing();
    let grid: Vec<f64> = (0..cfg.points)
        .map(|m| if m + 1 == cfg.points { cfg.hi } else { cfg.lo + m as f64 * h })
        .collect();
    let discretize = |w1: f64, m1: f64, s1: f64, w2: f64, m2: f64, s2: f64| -> Vec<f64> {
        grid.iter()
            .map(|&x| h * (w1 * normal_pdf(x, m1, s1) + w2 * normal_pdf(x, m2, s2)))
            .collect()
    };
    let mut mu = discretize(cfg.p, cfg.a, cfg.sigma, cfg.p_prime, cfg.a_prime, cfg.sigma_prime);
    let mut nu = discretize(cfg.p_prime, cfg.a, cfg.sigma_prime, cfg.p, cfg.a_prime, cfg.sigma);

    let total = cfg.p + cfg.p_prime;
    for (name, m) in [("mu", &mu), ("nu", &nu)] {
        let s: f64 = m.iter().sum();
        if (s - total).abs() > 1e-6 * total {
            return Err(Error::Config(format!(
                "grid [{}, {}] with {} points carries mass {s} of {total} for {name}; widen or refine the grid",
                cfg.lo, cfg.hi, cfg.points
            )));
        }
    }
    for m in [&mut mu, &mut nu] {
        let s: f64 = m.iter().sum();
        m.iter_mut().for_each(|v| *v *= total / s);
    }
    let argmax = (0..nu.len()).max_by(|&i, &j| nu[i].total_cmp(&nu[j])).unwrap();
    for _ in 0..8 {
        let diff = mu.iter().sum::<f64>() - nu.iter().sum::<f64>();
        if diff == 0.0 {
            break;
        }
        nu[argmax] += diff;
    }

    let points: Vec<Point> = grid.iter().map(|&x| Point(vec![x])).collect();
    let models = cfg
        .true_shifts()
        .iter()
        .map(|&s| AffineModel::shift(DVector::from_vec(vec![s])))
        .collect::<Result<Vec<_>>>()?;
    ObservationSequence::with_metadata(
        vec![
            DiscreteMeasure::new(points.clone(), mu)?,
            DiscreteMeasure::new(points, nu)?,
        ],
        vec![vec![-1; cfg.points]; 2],
        Truth {
            labels: None,
            models: Some(models),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_trajectories_follow_dynamics() {
        let cfg = SimConfig {
            sigma2: 0.0,
            seed: 4,
            ..SimConfig::default()
        };
        let inst = sample_instance(&cfg).unwrap();
        let models = inst.trajectories.models.as_ref().unwrap();
        let labels = inst.trajectories.labels.as_ref().unwrap();
        let mut worst: f64 = 0.0;
        for (tr, &k) in inst.trajectories.trajectories().iter().zip(labels) {
            for w in tr.windows(2) {
                worst = worst.max(models[k].cost(&w[0], &w[1]).unwrap().sqrt());
            }
        }
        assert!(worst <= 1e-12, "{worst}");
    }

    #[test]
    fn default_sizes() {
        let inst = sample_instance(&SimConfig::default()).unwrap();
        assert_eq!(inst.observations.sizes(), vec![37; 7]);
        assert!(inst
            .observations
            .measures()
            .iter()
            .all(|m| m.masses().iter().all(|&w| w == 1.0)));
        assert_eq!(inst.trajectories.len(), 37);
    }

    #[test]
    fn snapshot_labels_match_particle_ids() {
        let inst = sample_instance(&SimConfig::default()).unwrap();
        let labels = inst.observations.labels().unwrap();
        let truth = inst.trajectories.labels.as_ref().unwrap();
        for (t, ids) in inst.observations.particle_ids().iter().enumerate() {
            for (i, &id) in ids.iter().enumerate() {
                assert_eq!(labels[t][i], truth[id as usize]);
                assert_eq!(
                    inst.observations.measure(t).points()[i],
                    inst.trajectories.trajectories()[id as usize][t]
                );
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SimConfig {
            seed: 99,
            ..SimConfig::default()
        };
        let a = sample_instance(&cfg).unwrap();
        let b = sample_instance(&cfg).unwrap();
        assert_eq!(a.observations, b.observations);
        let c = sample_instance(&SimConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.observations, c.observations);
    }

    #[test]
    fn invalid_config() {
        let cfg = SimConfig {
            sizes: vec![3, 0],
            ..SimConfig::default()
        };
        assert!(matches!(sample_instance(&cfg), Err(Error::Config(_))));
        let cfg = SimConfig {
            sigma2: -1.0,
            ..SimConfig::default()
        };
        assert!(sample_instance(&cfg).is_err());
    }

    #[test]
    fn gmm_masses_balance_exactly() {
        let seq = gmm_example(&GmmConfig::default()).unwrap();
        let s0: f64 = seq.measure(0).masses().iter().sum();
        let s1: f64 = seq.measure(1).masses().iter().sum();
        assert_eq!(s0, s1);
        assert!((s0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gmm_unnormalized_mass_is_accurate() {
        let cfg = GmmConfig::default();
        let h = cfg.spacing();
        let s: f64 = (0..cfg.points)
            .map(|m| {
                let x = cfg.lo + m as f64 * h;
                h * (cfg.p * normal_pdf(x, cfg.a, cfg.sigma) + cfg.p_prime * normal_pdf(x, cfg.a_prime, cfg.sigma_prime))
            })
            .sum();
        assert!((s - (cfg.p + cfg.p_prime)).abs() < 1e-6);
    }

    #[test]
    fn gmm_parameter_swaps_exchange_mu_and_nu() {
        let cfg = GmmConfig::default();
        let base = gmm_example(&cfg).unwrap();
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(a, b)| (a - b).abs() <= 1e-14);

        // (p, σ) ↔ (p', σ') alone maps μ ↔ ν
        let swapped = gmm_example(&GmmConfig {
            p: cfg.p_prime,
            p_prime: cfg.p,
            sigma: cfg.sigma_prime,
            sigma_prime: cfg.sigma,
            ..cfg.clone()
        })
        .unwrap();
        assert!(close(swapped.measure(0).masses(), base.measure(1).masses()));
        assert!(close(swapped.measure(1).masses(), base.measure(0).masses()));

        // a ↔ a' alone also maps μ ↔ ν
        let moved = gmm_example(&GmmConfig {
            a: cfg.a_prime,
            a_prime: cfg.a,
            ..cfg.clone()
        })
        .unwrap();
        assert!(close(moved.measure(0).masses(), base.measure(1).masses()));

        // both swaps together leave the pair unchanged
        let both = gmm_example(&GmmConfig {
            p: cfg.p_prime,
            p_prime: cfg.p,
            sigma: cfg.sigma_prime,
            sigma_prime: cfg.sigma,
            a: cfg.a_prime,
            a_prime: cfg.a,
            ..cfg.clone()
        })
        .unwrap();
        assert!(close(both.measure(0).masses(), base.measure(0).masses()));
    }

    #[test]
    fn gmm_narrow_grid_is_an_error() {
        let cfg = GmmConfig {
            lo: -1.0,
            hi: 5.0,
            ..GmmConfig::default()
        };
        assert!(matches!(gmm_example(&cfg), Err(Error::Config(_))));
        let cfg = GmmConfig {
            points: 1,
            ..GmmConfig::default()
        };
        assert!(matches!(gmm_example(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[0, 0]);
        assert_ne!(a, derive_seed(1, &[0, 1]));
        assert_ne!(a, derive_seed(1, &[1, 0]));
        assert_ne!(a, derive_seed(2, &[0, 0]));
        assert_eq!(a, derive_seed(1, &[0, 0]));
    }
}
