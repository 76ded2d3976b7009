//! Block coordinate descent: alternate the coupled transport solve with
//! dynamics fixed and a weighted least-squares refit with plans fixed.

use rand::SeedableRng;
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{AffineModel, ModelKind, WeightedMoments};
use crate::error::{Error, Result};
use crate::measures::ObservationSequence;
use crate::synth::derive_seed;
use crate::transport::{model_costs, CoupledPlanSet, CoupledSolver};

/// Ensembles carrying less than this fraction of the total mass keep their
/// previous model in the refit step.
pub const EMPTY_ENSEMBLE_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcdOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub restarts: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            rel_tol: 1e-9,
            restarts: 10,
            init_scale: 1.0,
            seed: 0,
        }
    }
}

impl BcdOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rel_tol) {
            return Err(Error::Config(format!("rel_tol must lie in [0, 1), got {}", self.rel_tol)));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!("init_scale must be positive, got {}", self.init_scale)));
        }
        Ok(())
    }
}

/// Result of one descent run, or the selected run of a multi-start.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationSolution {
    pub models: Vec<AffineModel>,
    pub plans: CoupledPlanSet,
    /// Objective after every plan step.
    pub objective_trace: Vec<f64>,
    /// `labels[t][i]`.
    pub labels: Vec<Vec<usize>>,
    pub converged: bool,
    pub restart_index: usize,
    /// Final objective of every restart (a single entry for [`bcd_fit`]).
    pub restart_objectives: Vec<f64>,
}

impl SeparationSolution {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("at least one plan step")
    }

    pub fn iterations(&self) -> usize {
        self.objective_trace.len()
    }

    pub fn to_record(&self, include_plans: bool) -> SolutionRecord {
        SolutionRecord {
            objective: self.objective(),
            models: self.models.clone(),
            labels: self.labels.clone(),
            objective_trace: self.objective_trace.clone(),
            converged: self.converged,
            restart_index: self.restart_index,
            restart_objectives: self.restart_objectives.clone(),
            plans: include_plans.then(|| PlanRecord::from_plans(&self.plans)),
        }
    }
}

/// Serialized form of a [`SeparationSolution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub objective: f64,
    pub models: Vec<AffineModel>,
    pub labels: Vec<Vec<usize>>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub restart_index: usize,
    pub restart_objectives: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plans: Option<PlanRecord>,
}

/// Plans as sparse `(i, j, mass)` lists and dense marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    /// `support[k][t]`.
    pub support: Vec<Vec<Vec<(usize, usize, f64)>>>,
    /// `marginals[k][t][i]`.
    pub marginals: Vec<Vec<Vec<f64>>>,
}

impl PlanRecord {
    pub fn from_plans(plans: &CoupledPlanSet) -> Self {
        Self {
            support: plans
                .plans
                .iter()
                .map(|pk| pk.iter().map(|p| p.support(0.0).collect()).collect())
                .collect(),
            marginals: plans.marginals.clone(),
        }
    }
}

fn check_ensembles(seq: &ObservationSequence, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("need at least one ensemble".into()));
    }
    if let Some((t, &n)) = seq.sizes().iter().enumerate().find(|(_, &n)| n < k) {
        return Err(Error::Config(format!(
            "{k} ensembles but snapshot t={} has only {n} points",
            t + 1
        )));
    }
    Ok(())
}

/// Label of each point: the ensemble carrying most of its mass, ties toward
/// the smaller index.
pub fn extract_labels(plans: &CoupledPlanSet) -> Vec<Vec<usize>> {
    let k_count = plans.ensembles();
    if k_count == 0 {
        return Vec::new();
    }
    let horizon = plans.marginals[0].len();
    (0..horizon)
        .map(|t| {
            (0..plans.marginals[0][t].len())
                .map(|i| {
                    let mut best = 0;
                    for k in 1..k_count {
                        if plans.marginals[k][t][i] > plans.marginals[best][t][i] {
                            best = k;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect()
}

/// Weighted least-squares refit of every ensemble on its plan-weighted pairs.
fn refit(
    seq: &ObservationSequence,
    plans: &CoupledPlanSet,
    previous: &[AffineModel],
    kind: ModelKind,
) -> Result<Vec<AffineModel>> {
    let floor = EMPTY_ENSEMBLE_FRACTION * seq.total_mass();
    plans
        .plans
        .iter()
        .zip(previous)
        .map(|(pk, prev)| {
            let mut moments = WeightedMoments::new(seq.dim());
            for (t, plan) in pk.iter().enumerate() {
                let xs = seq.measure(t).points();
                let ys = seq.measure(t + 1).points();
                for (i, j, w) in plan.support(0.0) {
                    moments.add(&xs[i], &ys[j], w)?;
                }
            }
            if moments.total_weight() < floor {
                Ok(prev.clone())
            } else {
                moments.fit(kind)
            }
        })
        .collect()
}

fn descend(
    solver: &mut CoupledSolver,
    seq: &ObservationSequence,
    kind: ModelKind,
    init: &[AffineModel],
    opts: &BcdOptions,
) -> Result<SeparationSolution> {
    let mut models = init.to_vec();
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut plans = None;
    for iter in 0..opts.max_iters {
        let costs = model_costs(seq, &models)?;
        let step = solver.solve(&costs)?;
        let obj = step.objective;
        if let Some(&prev) = trace.last() {
            if prev - obj <= opts.rel_tol * prev.abs() {
                converged = true;
            }
        }
        trace.push(obj);
        if converged || iter + 1 == opts.max_iters {
            plans = Some(step);
            break;
        }
        models = refit(seq, &step, &models, kind)?;
        plans = Some(step);
    }
    let plans = plans.expect("max_iters ≥ 1");
    Ok(SeparationSolution {
        labels: extract_labels(&plans),
        restart_objectives: vec![*trace.last().unwrap()],
        models,
        plans,
        objective_trace: trace,
        converged,
        restart_index: 0,
    })
}

fn check_init(seq: &ObservationSequence, k: usize, kind: ModelKind, init: &[AffineModel]) -> Result<()> {
    if init.len() != k {
        return Err(Error::Config(format!("{} initial models for {k} ensembles", init.len())));
    }
    for m in init {
        if m.dim() != seq.dim() {
            return Err(Error::Dimension {
                expected: seq.dim(),
                got: m.dim(),
            });
        }
        if m.kind() != kind {
            return Err(Error::Config(format!("initial model of kind {} where {kind} was requested", m.kind())));
        }
    }
    Ok(())
}

/// One descent run from the given initial models.
pub fn bcd_fit(
    seq: &ObservationSequence,
    k: usize,
    kind: ModelKind,
    init: &[AffineModel],
    opts: &BcdOptions,
) -> Result<SeparationSolution> {
    opts.validate()?;
    check_ensembles(seq, k)?;
    check_init(seq, k, kind, init)?;
    let mut solver = CoupledSolver::new(seq, k)?;
    descend(&mut solver, seq, kind, init, opts)
}

/// Initial models of restart `r`: entries i.i.d. `N(0, init_scale²)`.
pub fn restart_init(d: usize, k: usize, kind: ModelKind, opts: &BcdOptions, r: usize) -> Vec<AffineModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &[r as u64]));
    (0..k)
        .map(|_| AffineModel::random(kind, d, opts.init_scale, &mut rng))
        .collect()
}

/// Best of `opts.restarts` descent runs by final objective, ties toward the
/// smaller restart index.
///
/// Every restart starts from the same feasible basis, so restarts are
/// independent of one another and may run in parallel without changing the
/// result.
pub fn multi_start(
    seq: &ObservationSequence,
    k: usize,
    kind: ModelKind,
    opts: &BcdOptions,
) -> Result<SeparationSolution> {
    opts.validate()?;
    check_ensembles(seq, k)?;
    let feasible = CoupledSolver::new(seq, k)?;
    let runs = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let init = restart_init(seq.dim(), k, kind, opts, r);
            let mut solver = feasible.clone();
            let mut sol = descend(&mut solver, seq, kind, &init, opts)?;
            sol.restart_index = r;
            Ok(sol)
        })
        .collect::<Result<Vec<_>>>()?;
    let objectives: Vec<f64> = runs.iter().map(SeparationSolution::objective).collect();
    let mut best = runs
        .into_iter()
        .reduce(|best, sol| if sol.objective() < best.objective() { sol } else { best })
        .expect("restarts ≥ 1");
    best.restart_objectives = objectives;
    Ok(best)
}
