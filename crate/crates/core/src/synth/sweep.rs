//! Monte Carlo comparison of the proposed method with the two baselines over
//! a grid of noise levels.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, sample_instance, Instance, SimConfig};
use crate::bcd::{multi_start, BcdOptions};
use crate::dynamics::{AffineModel, ModelKind};
use crate::error::{Error, Result};
use crate::eval::{evaluate, oracle_fit, semi_oracle_fit};
use crate::measures::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Proposed,
    Oracle,
    SemiOracle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::Oracle, Method::SemiOracle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Oracle => "oracle",
            Method::SemiOracle => "semi-oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?} (expected proposed, oracle or semi-oracle)")))
    }
}

/// `points` values log-spaced over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect()
}

/// 8 noise variances log-spaced over `[1e-6, 1e-1]`.
pub fn default_sigma2_grid() -> Vec<f64> {
    log_grid(1e-6, 1e-1, 8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Instance settings; `sigma2` and `seed` are overridden per trial.
    pub base: SimConfig,
    pub sigma2_grid: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub bcd: BcdOptions,
    pub kmeans_restarts: usize,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: SimConfig::default(),
            sigma2_grid: default_sigma2_grid(),
            trials: 500,
            methods: Method::ALL.to_vec(),
            bcd: BcdOptions::default(),
            kmeans_restarts: 100,
            seed: 0,
            threads: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.bcd.validate()?;
        if self.sigma2_grid.is_empty() {
            return Err(Error::Config("σ² grid is empty".into()));
        }
        if let Some(s) = self.sigma2_grid.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::Config(format!("σ² must be finite and non-negative, got {s}")));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::Config("kmeans_restarts must be positive".into()));
        }
        Ok(())
    }

    /// Instance settings of trial `trial` at grid index `s`.
    pub fn instance_config(&self, s: usize, trial: usize) -> SimConfig {
        SimConfig {
            sigma2: self.sigma2_grid[s],
            seed: derive_seed(self.seed, &[s as u64, trial as u64]),
            ..self.base.clone()
        }
    }
}

/// One method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sigma2: f64,
    pub trial: usize,
    pub method: Method,
    pub param_sq_error: f64,
    pub classification_accuracy: f64,
    pub objective: f64,
    pub wall_ms: Option<f64>,
}

impl SweepRecord {
    pub const CSV_HEADER: &'static str =
        "sigma2,trial,method,param_sq_error,classification_accuracy,objective,wall_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            fmt_f64(self.sigma2),
            self.trial,
            self.method,
            fmt_f64(self.param_sq_error),
            fmt_f64(self.classification_accuracy),
            fmt_f64(self.objective),
            self.wall_ms.map(fmt_f64).unwrap_or_default()
        )
    }
}

/// Transport cost of the true pairing under `models`, with trajectory `p`
/// assigned to ensemble `assign[p]`.
fn pairing_objective(inst: &Instance, models: &[AffineModel], assign: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for (tr, &k) in inst.trajectories.trajectories().iter().zip(assign) {
        for w in tr.windows(2) {
            total += models[k].cost(&w[0], &w[1])?;
        }
    }
    Ok(total)
}

/// Per-snapshot labels implied by a per-trajectory assignment.
fn snapshot_labels(inst: &Instance, assign: &[usize]) -> Result<Vec<Vec<usize>>> {
    inst.observations
        .particle_ids()
        .iter()
        .map(|ids| {
            ids.iter()
                .map(|&id| {
                    usize::try_from(id)
                        .ok()
                        .and_then(|p| assign.get(p).copied())
                        .ok_or_else(|| Error::Shape(format!("particle id {id} has no trajectory")))
                })
                .collect()
        })
        .collect()
}

/// Runs `method` on one instance: `(models, labels, objective)`.
pub fn run_method(
    method: Method,
    inst: &Instance,
    cfg: &SweepConfig,
    instance_seed: u64,
) -> Result<(Vec<AffineModel>, Vec<Vec<usize>>, f64)> {
    let k = cfg.base.ensembles();
    let kind = ModelKind::Affine;
    match method {
        Method::Proposed => {
            let opts = BcdOptions {
                seed: derive_seed(instance_seed, &[1]),
                ..cfg.bcd.clone()
            };
            let sol = multi_start(&inst.observations, k, kind, &opts)?;
            let obj = sol.objective();
            Ok((sol.models, sol.labels, obj))
        }
        Method::Oracle => {
            let models = oracle_fit(&inst.trajectories, kind)?;
            let assign = inst.trajectories.labels.clone().expect("simulated truth");
            let obj = pairing_objective(inst, &models, &assign)?;
            Ok((models, snapshot_labels(inst, &assign)?, obj))
        }
        Method::SemiOracle => {
            let fit = semi_oracle_fit(
                &inst.trajectories,
                k,
                kind,
                cfg.kmeans_restarts,
                derive_seed(instance_seed, &[2]),
            )?;
            let obj = pairing_objective(inst, &fit.models, &fit.labels)?;
            Ok((fit.models.clone(), snapshot_labels(inst, &fit.labels)?, obj))
        }
    }
}

fn run_trial(cfg: &SweepConfig, methods: &[Method], s: usize, trial: usize) -> Result<Vec<SweepRecord>> {
    let sim = cfg.instance_config(s, trial);
    let inst = sample_instance(&sim)?;
    let truth_models = inst.observations.truth.models.clone().expect("simulated truth");
    let truth_labels = inst.observations.labels().expect("simulated truth").to_vec();
    methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let (models, labels, objective) = run_method(method, &inst, cfg, sim.seed)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let report = evaluate(&models, &labels, &truth_models, &truth_labels)?;
            Ok(SweepRecord {
                sigma2: sim.sigma2,
                trial,
                method,
                param_sq_error: report.param_sq_error,
                classification_accuracy: report.classification_accuracy,
                objective,
                wall_ms: Some(wall_ms),
            })
        })
        .collect()
}

/// Every (σ², trial, method) record, ordered by grid index, trial, then
/// method. Seeds derive from `(seed, σ² index, trial)` only, so records do not
/// depend on the method list order or on scheduling.
pub fn monte_carlo_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let jobs: Vec<(usize, usize)> = (0..cfg.sigma2_grid.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let per_job: Vec<Vec<SweepRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, t)| run_trial(cfg, &methods, s, t))
            .collect::<Result<_>>()
    })?;
    Ok(per_job.into_iter().flatten().collect())
}

pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], mut out: W) -> Result<()> {
    writeln!(out, "{}", SweepRecord::CSV_HEADER)?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct RawRecord {
    sigma2: f64,
    trial: usize,
    method: String,
    param_sq_error: f64,
    classification_accuracy: f64,
    objective: f64,
    wall_ms: Option<f64>,
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != SweepRecord::CSV_HEADER {
        return Err(Error::Validation(format!(
            "sweep header {:?}, expected {:?}",
            header.join(","),
            SweepRecord::CSV_HEADER
        )));
    }
    reader
        .deserialize::<RawRecord>()
        .map(|r| {
            let r = r?;
            Ok(SweepRecord {
                sigma2: r.sigma2,
                trial: r.trial,
                method: r.method.parse()?,
                param_sq_error: r.param_sq_error,
                classification_accuracy: r.classification_accuracy,
                objective: r.objective,
                wall_ms: r.wall_ms,
            })
        })
        .collect()
}

/// Median and the 5th/95th percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
}

/// Percentile `q ∈ [0, 1]` of sorted data, linear interpolation between
/// closest ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Self {
            median: percentile(&v, 0.5),
            p5: percentile(&v, 0.05),
            p95: percentile(&v, 0.95),
        })
    }
}

/// Summaries per (σ², method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sigma2: f64,
    pub method: Method,
    pub trials: usize,
    pub param_sq_error: Summary,
    pub classification_accuracy: Summary,
    pub objective: Summary,
    /// Absent when any record lacks a wall time.
    pub wall_ms: Option<Summary>,
}

impl AggregateRow {
    pub const CSV_HEADER: &'static str = "sigma2,method,trials,\
param_sq_error_median,param_sq_error_p5,param_sq_error_p95,\
classification_accuracy_median,classification_accuracy_p5,classification_accuracy_p95,\
objective_median,objective_p5,objective_p95,wall_ms_median,wall_ms_p5,wall_ms_p95";

    pub fn csv_row(&self) -> String {
        let s = |x: &Summary| format!("{},{},{}", fmt_f64(x.median), fmt_f64(x.p5), fmt_f64(x.p95));
        format!(
            "{},{},{},{},{},{},{}",
            fmt_f64(self.sigma2),
            self.method,
            self.trials,
            s(&self.param_sq_error),
            s(&self.classification_accuracy),
            s(&self.objective),
            self.wall_ms.as_ref().map_or(",,".to_string(), s)
        )
    }
}

/// Groups records by (σ², method), sorted by σ² then method.
pub fn aggregate(records: &[SweepRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(f64, Method)> = records.iter().map(|r| (r.sigma2, r.method)).collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(sigma2, method)| {
            let group: Vec<&SweepRecord> = records
                .iter()
                .filter(|r| r.sigma2.to_bits() == sigma2.to_bits() && r.method == method)
                .collect();
            let summary = |f: fn(&SweepRecord) -> f64| Summary::of(group.iter().map(|r| f(r))).unwrap();
            AggregateRow {
                sigma2,
                method,
                trials: group.len(),
                param_sq_error: summary(|r| r.param_sq_error),
                classification_accuracy: summary(|r| r.classification_accuracy),
                objective: summary(|r| r.objective),
                wall_ms: group
                    .iter()
                    .map(|r| r.wall_ms)
                    .collect::<Option<Vec<f64>>>()
                    .and_then(Summary::of),
            }
        })
        .collect()
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], mut out: W) -> Result<()> {
    writeln!(out, "{}", AggregateRow::CSV_HEADER)?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}
