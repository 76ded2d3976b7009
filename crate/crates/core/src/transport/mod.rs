//! The coupled optimal-transport linear program solved in the plan step of
//! the alternating scheme, and the classic two-marginal problem.
//!
//! For `K` ensembles and snapshots `t = 1..T` the program has one plan
//! `m_k^(t)` (size `n_t × n_{t+1}`) per ensemble and step and one marginal
//! `μ_k^(t)` per ensemble and snapshot, subject to
//!
//! - row sums: `Σ_j m_k^(t)(i,j) − μ_k^(t)(i) = 0`
//! - column sums: `Σ_i m_k^(t)(i,j) − μ_k^(t+1)(j) = 0`
//! - superposition: `Σ_k μ_k^(t)(i) = μ^(t)(i)`
//!
//! and minimizes `Σ_{t,k} ⟨C_{k,t}, m_k^(t)⟩`.

mod classic;
pub mod lu;
pub mod simplex;

use std::io::Write;

pub use classic::{solve_classic_ot, ClassicOt};
pub use simplex::{CscMatrix, RevisedSimplex, SimplexSolution};

use crate::dynamics::{cost_matrix, AffineModel, CostMatrix};
use crate::error::{Error, Result};
use crate::measures::ObservationSequence;

/// Dense nonnegative transport plan, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl TransportPlan {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), rows * cols);
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries
            .chunks(self.cols.max(1))
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in self.entries.chunks(self.cols.max(1)) {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }

    /// `⟨C, m⟩`.
    pub fn inner(&self, cost: &CostMatrix) -> f64 {
        self.entries
            .iter()
            .zip(cost.entries())
            .map(|(m, c)| m * c)
            .sum()
    }

    /// Nonzero entries `(i, j, mass)` above `threshold`.
    pub fn support(&self, threshold: f64) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(_, &v)| v > threshold)
            .map(move |(e, &v)| (e / self.cols, e % self.cols, v))
    }
}

/// Positions of the LP variables and constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct VarLayout {
    ensembles: usize,
    sizes: Vec<usize>,
    plan_offset: Vec<Vec<usize>>,
    marginal_offset: Vec<Vec<usize>>,
    num_vars: usize,
    row_out: Vec<Vec<usize>>,
    row_in: Vec<Vec<usize>>,
    row_obs: Vec<usize>,
    num_rows: usize,
}

/// What an LP column stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    Plan { k: usize, t: usize, i: usize, j: usize },
    Marginal { k: usize, t: usize, i: usize },
}

impl VarLayout {
    pub fn new(ensembles: usize, sizes: &[usize]) -> Self {
        let horizon = sizes.len();
        let mut next = 0;
        let mut plan_offset = vec![Vec::new(); ensembles];
        for offsets in plan_offset.iter_mut() {
            for t in 0..horizon.saturating_sub(1) {
                offsets.push(next);
                next += sizes[t] * sizes[t + 1];
            }
        }
        let mut marginal_offset = vec![Vec::new(); ensembles];
        for offsets in marginal_offset.iter_mut() {
            for &n in sizes {
                offsets.push(next);
                next += n;
            }
        }
        let num_vars = next;

        let mut rows = 0;
        let mut row_out = vec![Vec::new(); ensembles];
        for r in row_out.iter_mut() {
            for &n in &sizes[..horizon.saturating_sub(1)] {
                r.push(rows);
                rows += n;
            }
        }
        let mut row_in = vec![Vec::new(); ensembles];
        for r in row_in.iter_mut() {
            for &n in sizes.iter().skip(1) {
                r.push(rows);
                rows += n;
            }
        }
        let mut row_obs = Vec::new();
        for &n in sizes {
            row_obs.push(rows);
            rows += n;
        }
        Self {
            ensembles,
            sizes: sizes.to_vec(),
            plan_offset,
            marginal_offset,
            num_vars,
            row_out,
            row_in,
            row_obs,
            num_rows: rows,
        }
    }

    pub fn ensembles(&self) -> usize {
        self.ensembles
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_plan_vars(&self) -> usize {
        self.ensembles
            * self
                .sizes
                .windows(2)
                .map(|w| w[0] * w[1])
                .sum::<usize>()
    }

    pub fn num_marginal_vars(&self) -> usize {
        self.num_vars - self.num_plan_vars()
    }

    pub fn plan_var(&self, k: usize, t: usize, i: usize, j: usize) -> usize {
        self.plan_offset[k][t] + i * self.sizes[t + 1] + j
    }

    pub fn marginal_var(&self, k: usize, t: usize, i: usize) -> usize {
        self.marginal_offset[k][t] + i
    }

    pub fn variable(&self, var: usize) -> Option<Variable> {
        for k in 0..self.ensembles {
            for t in 0..self.sizes.len() {
                if t + 1 < self.sizes.len() {
                    let off = self.plan_offset[k][t];
                    let len = self.sizes[t] * self.sizes[t + 1];
                    if (off..off + len).contains(&var) {
                        let e = var - off;
                        let n = self.sizes[t + 1];
                        return Some(Variable::Plan { k, t, i: e / n, j: e % n });
                    }
                }
                let off = self.marginal_offset[k][t];
                if (off..off + self.sizes[t]).contains(&var) {
                    return Some(Variable::Marginal { k, t, i: var - off });
                }
            }
        }
        None
    }
}

/// `min cᵀx  s.t.  E x = f, x ≥ 0` together with its variable layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub costs: Vec<f64>,
    pub matrix: CscMatrix,
    pub rhs: Vec<f64>,
    pub layout: VarLayout,
}

impl LinearProgram {
    pub fn num_constraints(&self) -> usize {
        self.matrix.rows
    }

    /// Plain-text listing of `c`, `E` (triplets) and `f`, for debugging.
    pub fn write_dump(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "LP {} rows {} cols {} nnz",
            self.matrix.rows,
            self.matrix.cols,
            self.matrix.nnz()
        )?;
        writeln!(out, "C")?;
        for (j, c) in self.costs.iter().enumerate() {
            writeln!(out, "{j:>8} {c:>24.17e}")?;
        }
        writeln!(out, "E")?;
        for (i, j, v) in self.matrix.triplets() {
            writeln!(out, "{i:>8} {j:>8} {v:>24.17e}")?;
        }
        writeln!(out, "F")?;
        for (i, f) in self.rhs.iter().enumerate() {
            writeln!(out, "{i:>8} {f:>24.17e}")?;
        }
        Ok(())
    }
}

fn coupled_constraints(seq: &ObservationSequence, ensembles: usize) -> (CscMatrix, Vec<f64>, VarLayout) {
    let sizes = seq.sizes();
    let layout = VarLayout::new(ensembles, &sizes);
    let horizon = sizes.len();
    let mut triplets = Vec::with_capacity(2 * layout.num_plan_vars() + 3 * layout.num_marginal_vars());
    for k in 0..ensembles {
        for t in 0..horizon - 1 {
            for i in 0..sizes[t] {
                for j in 0..sizes[t + 1] {
                    let v = layout.plan_var(k, t, i, j);
                    triplets.push((layout.row_out[k][t] + i, v, 1.0));
                    triplets.push((layout.row_in[k][t] + j, v, 1.0));
                }
            }
        }
        for t in 0..horizon {
            for i in 0..sizes[t] {
                let v = layout.marginal_var(k, t, i);
                if t + 1 < horizon {
                    triplets.push((layout.row_out[k][t] + i, v, -1.0));
                }
                if t > 0 {
                    triplets.push((layout.row_in[k][t - 1] + i, v, -1.0));
                }
                triplets.push((layout.row_obs[t] + i, v, 1.0));
            }
        }
    }
    let mut rhs = vec![0.0; layout.num_rows];
    for t in 0..horizon {
        for (i, &m) in seq.measure(t).masses().iter().enumerate() {
            rhs[layout.row_obs[t] + i] = m;
        }
    }
    let matrix = CscMatrix::from_triplets(layout.num_rows, layout.num_vars, &triplets);
    (matrix, rhs, layout)
}

/// Checks that `costs[k][t]` is `n_t × n_{t+1}` for `ensembles` families.
pub(crate) fn check_cost_shapes(ensembles: usize, sizes: &[usize], costs: &[Vec<CostMatrix>]) -> Result<()> {
    if costs.len() != ensembles {
        return Err(Error::Shape(format!(
            "{} cost families for {ensembles} ensembles",
            costs.len()
        )));
    }
    for (k, per_t) in costs.iter().enumerate() {
        if per_t.len() + 1 != sizes.len() {
            return Err(Error::Shape(format!(
                "ensemble {k}: {} cost matrices for {} snapshots",
                per_t.len(),
                sizes.len()
            )));
        }
        for (t, m) in per_t.iter().enumerate() {
            if m.rows() != sizes[t] || m.cols() != sizes[t + 1] {
                return Err(Error::Shape(format!(
                    "cost[{k}][{t}] is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    sizes[t],
                    sizes[t + 1]
                )));
            }
        }
    }
    Ok(())
}

fn cost_vector(layout: &VarLayout, costs: &[Vec<CostMatrix>]) -> Result<Vec<f64>> {
    check_cost_shapes(layout.ensembles, layout.sizes(), costs)?;
    let mut c = vec![0.0; layout.num_vars];
    for (k, per_t) in costs.iter().enumerate() {
        for (t, m) in per_t.iter().enumerate() {
            let off = layout.plan_var(k, t, 0, 0);
            c[off..off + m.entries().len()].copy_from_slice(m.entries());
        }
    }
    Ok(c)
}

/// Assembles the coupled program for costs `costs[k][t]` (shape `n_t × n_{t+1}`).
pub fn build_coupled_lp(seq: &ObservationSequence, costs: &[Vec<CostMatrix>]) -> Result<LinearProgram> {
    if costs.is_empty() {
        return Err(Error::Shape("need at least one ensemble".into()));
    }
    let (matrix, rhs, layout) = coupled_constraints(seq, costs.len());
    let costs = cost_vector(&layout, costs)?;
    Ok(LinearProgram {
        costs,
        matrix,
        rhs,
        layout,
    })
}

/// Cost matrices `C_{k,t}` for every ensemble model and step.
pub fn model_costs(seq: &ObservationSequence, models: &[AffineModel]) -> Result<Vec<Vec<CostMatrix>>> {
    models
        .iter()
        .map(|m| {
            seq.measures()
                .windows(2)
                .map(|w| cost_matrix(m, &w[0], &w[1]))
                .collect()
        })
        .collect()
}

/// All plans and per-ensemble marginals of one coupled solution.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPlanSet {
    /// `plans[k][t]`, `n_t × n_{t+1}`.
    pub plans: Vec<Vec<TransportPlan>>,
    /// `marginals[k][t][i]`.
    pub marginals: Vec<Vec<Vec<f64>>>,
    pub objective: f64,
}

impl CoupledPlanSet {
    fn from_solution(layout: &VarLayout, x: &[f64], objective: f64) -> Self {
        let sizes = layout.sizes();
        let plans = (0..layout.ensembles)
            .map(|k| {
                (0..sizes.len() - 1)
                    .map(|t| {
                        let off = layout.plan_var(k, t, 0, 0);
                        let len = sizes[t] * sizes[t + 1];
                        TransportPlan::new(sizes[t], sizes[t + 1], x[off..off + len].to_vec())
                    })
                    .collect()
            })
            .collect();
        let marginals = (0..layout.ensembles)
            .map(|k| {
                (0..sizes.len())
                    .map(|t| {
                        let off = layout.marginal_var(k, t, 0);
                        x[off..off + sizes[t]].to_vec()
                    })
                    .collect()
            })
            .collect();
        Self {
            plans,
            marginals,
            objective,
        }
    }

    /// Plans from the plan variables alone; marginals are the plan row sums
    /// (column sums at the last snapshot).
    fn from_plan_values(layout: &VarLayout, x: &[f64], objective: f64) -> Self {
        let horizon = layout.sizes().len();
        let mut set = Self::from_solution(layout, &pad(x, layout.num_vars()), objective);
        for (pk, mk) in set.plans.iter().zip(set.marginals.iter_mut()) {
            for t in 0..horizon - 1 {
                mk[t] = pk[t].row_sums();
            }
            mk[horizon - 1] = pk[horizon - 2].col_sums();
        }
        set
    }

    pub fn ensembles(&self) -> usize {
        self.marginals.len()
    }

    /// Mass routed through ensemble `k`, counted at the first snapshot.
    pub fn ensemble_mass(&self, k: usize) -> f64 {
        self.marginals[k][0].iter().sum()
    }

    /// `Σ_{t,k} ⟨C_{k,t}, m_k^(t)⟩` for the given costs.
    pub fn cost_under(&self, costs: &[Vec<CostMatrix>]) -> f64 {
        self.plans
            .iter()
            .zip(costs)
            .flat_map(|(pk, ck)| pk.iter().zip(ck).map(|(p, c)| p.inner(c)))
            .sum()
    }

    /// Largest absolute violation over all constraints of the program.
    pub fn max_residual(&self, seq: &ObservationSequence) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, plans) in self.plans.iter().enumerate() {
            for (t, p) in plans.iter().enumerate() {
                for (r, m) in p.row_sums().iter().zip(&self.marginals[k][t]) {
                    worst = worst.max((r - m).abs());
                }
                for (c, m) in p.col_sums().iter().zip(&self.marginals[k][t + 1]) {
                    worst = worst.max((c - m).abs());
                }
                worst = worst.max(-p.entries().iter().fold(0.0f64, |a, &v| a.min(v)));
            }
        }
        for t in 0..seq.len() {
            for (i, &mass) in seq.measure(t).masses().iter().enumerate() {
                let s: f64 = self.marginals.iter().map(|mk| mk[t][i]).sum();
                worst = worst.max((s - mass).abs());
            }
        }
        worst
    }
}

fn pad(x: &[f64], len: usize) -> Vec<f64> {
    let mut v = x.to_vec();
    v.resize(len, 0.0);
    v
}

/// Solves a coupled program from scratch.
pub fn solve_lp(lp: &LinearProgram) -> Result<CoupledPlanSet> {
    let mut simplex = RevisedSimplex::new(lp.matrix.clone(), lp.rhs.clone());
    let sol = simplex.solve(&lp.costs)?;
    Ok(CoupledPlanSet::from_solution(&lp.layout, &sol.x, sol.objective))
}

/// Constraints of the program with the marginals eliminated: one
/// conservation row per interior node `(k, t, i)`, `0 < t < T−1`, and the
/// superposition rows, where the marginal of `(k, t, i)` is its outflow
/// (its inflow at the last snapshot). Columns are the plan variables in
/// [`VarLayout`] order.
fn reduced_constraints(seq: &ObservationSequence, layout: &VarLayout) -> (CscMatrix, Vec<f64>) {
    let sizes = layout.sizes();
    let horizon = sizes.len();
    let interior: usize = sizes[1..horizon - 1].iter().sum();
    let mut cons_off = vec![0; horizon];
    let mut acc = 0;
    for t in 1..horizon - 1 {
        cons_off[t] = acc;
        acc += sizes[t];
    }
    let cons = |k: usize, t: usize, i: usize| k * interior + cons_off[t] + i;
    let obs_base = layout.ensembles * interior;
    let mut obs_off = vec![0; horizon];
    let mut acc = obs_base;
    for t in 0..horizon {
        obs_off[t] = acc;
        acc += sizes[t];
    }
    let rows = acc;
    let mut triplets = Vec::with_capacity(3 * layout.num_plan_vars());
    for k in 0..layout.ensembles {
        for t in 0..horizon - 1 {
            for i in 0..sizes[t] {
                for j in 0..sizes[t + 1] {
                    let v = layout.plan_var(k, t, i, j);
                    if t > 0 {
                        triplets.push((cons(k, t, i), v, -1.0));
                    }
                    if t + 2 < horizon {
                        triplets.push((cons(k, t + 1, j), v, 1.0));
                    }
                    triplets.push((obs_off[t] + i, v, 1.0));
                    if t + 2 == horizon {
                        triplets.push((obs_off[t + 1] + j, v, 1.0));
                    }
                }
            }
        }
    }
    let mut rhs = vec![0.0; rows];
    for t in 0..horizon {
        for (i, &m) in seq.measure(t).masses().iter().enumerate() {
            rhs[obs_off[t] + i] = m;
        }
    }
    (CscMatrix::from_triplets(rows, layout.num_plan_vars(), &triplets), rhs)
}

/// Coupled-program solver bound to one dataset and ensemble count.
///
/// Works on the equivalent program without marginal variables, which has
/// about half the rows. The constraint system depends only on the
/// observations, so the solver finds a feasible basis once and then
/// re-optimizes from the previous basis whenever the costs change.
#[derive(Debug, Clone)]
pub struct CoupledSolver {
    layout: VarLayout,
    simplex: RevisedSimplex,
    last_iterations: usize,
}

impl CoupledSolver {
    pub fn new(seq: &ObservationSequence, ensembles: usize) -> Result<Self> {
        if ensembles == 0 {
            return Err(Error::Config("need at least one ensemble".into()));
        }
        let layout = VarLayout::new(ensembles, &seq.sizes());
        let (matrix, rhs) = reduced_constraints(seq, &layout);
        let mut simplex = RevisedSimplex::new(matrix, rhs);
        simplex.make_feasible()?;
        Ok(Self {
            layout,
            simplex,
            last_iterations: 0,
        })
    }

    pub fn layout(&self) -> &VarLayout {
        &self.layout
    }

    /// Rows of the reduced program.
    pub fn num_rows(&self) -> usize {
        self.simplex.rows()
    }

    /// Simplex pivots used by the most recent solve.
    pub fn last_iterations(&self) -> usize {
        self.last_iterations
    }

    pub fn solve(&mut self, costs: &[Vec<CostMatrix>]) -> Result<CoupledPlanSet> {
        let mut c = cost_vector(&self.layout, costs)?;
        c.truncate(self.layout.num_plan_vars());
        let sol = self.simplex.solve(&c)?;
        self.last_iterations = sol.iterations;
        Ok(CoupledPlanSet::from_plan_values(&self.layout, &sol.x, sol.objective))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{AffineModel, ModelKind};
    use crate::measures::{DiscreteMeasure, Point};

    fn seq_1d(times: &[&[f64]]) -> ObservationSequence {
        ObservationSequence::new(
            times
                .iter()
                .map(|xs| DiscreteMeasure::uniform(xs.iter().map(|&x| Point(vec![x])).collect()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn counts_k1_t2_n2() {
        let seq = seq_1d(&[&[0.0, 1.0], &[2.0, 3.0]]);
        let costs = model_costs(&seq, &[AffineModel::identity(ModelKind::Affine, 1)]).unwrap();
        let lp = build_coupled_lp(&seq, &costs).unwrap();
        assert_eq!(lp.layout.num_plan_vars(), 4);
        assert_eq!(lp.layout.num_marginal_vars(), 4);
        // 2 row-sum + 2 column-sum + 2·2 superposition rows
        assert_eq!(lp.num_constraints(), 8);
    }

    #[test]
    fn counts_k2_single_points() {
        let seq = seq_1d(&[&[0.0], &[1.0]]);
        let id = AffineModel::identity(ModelKind::Affine, 1);
        let costs = model_costs(&seq, &[id.clone(), id]).unwrap();
        let lp = build_coupled_lp(&seq, &costs).unwrap();
        assert_eq!(lp.layout.num_plan_vars(), 2);
        assert_eq!(lp.layout.num_marginal_vars(), 4);
        // superposition rows: μ_1 + μ_2 = μ at each of the two points
        let obs_rows: Vec<usize> = lp.layout.row_obs.clone();
        for r in obs_rows {
            let cols: Vec<usize> = lp
                .matrix
                .triplets()
                .filter(|&(i, _, _)| i == r)
                .map(|(_, j, _)| j)
                .collect();
            assert_eq!(cols.len(), 2);
            assert_eq!(lp.rhs[r], 1.0);
        }
    }

    #[test]
    fn counts_default_protocol_sizes() {
        let layout = VarLayout::new(3, &[37; 7]);
        assert_eq!(layout.num_plan_vars(), 24_642);
        assert_eq!(layout.num_marginal_vars(), 777);
    }

    #[test]
    fn layout_decodes_every_variable() {
        let layout = VarLayout::new(2, &[2, 3, 1]);
        for v in 0..layout.num_vars() {
            match layout.variable(v).unwrap() {
                Variable::Plan { k, t, i, j } => assert_eq!(layout.plan_var(k, t, i, j), v),
                Variable::Marginal { k, t, i } => assert_eq!(layout.marginal_var(k, t, i), v),
            }
        }
        assert!(layout.variable(layout.num_vars()).is_none());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let seq = seq_1d(&[&[0.0, 1.0], &[2.0, 3.0]]);
        let bad = vec![vec![CostMatrix::new(1, 2, vec![0.0, 0.0]).unwrap()]];
        assert!(matches!(build_coupled_lp(&seq, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn identity_transport_is_free() {
        let seq = seq_1d(&[&[0.0, 1.0, 5.0], &[0.0, 1.0, 5.0]]);
        let costs = model_costs(&seq, &[AffineModel::identity(ModelKind::Affine, 1)]).unwrap();
        let sol = solve_lp(&build_coupled_lp(&seq, &costs).unwrap()).unwrap();
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn monotone_matching_not_crossing() {
        let seq = seq_1d(&[&[0.0, 1.0], &[2.0, 3.0]]);
        let costs = model_costs(&seq, &[AffineModel::identity(ModelKind::Affine, 1)]).unwrap();
        let sol = solve_lp(&build_coupled_lp(&seq, &costs).unwrap()).unwrap();
        assert!((sol.objective - 8.0).abs() < 1e-12);
        assert!(sol.max_residual(&seq) < 1e-12);
    }

    #[test]
    fn dump_lists_all_sections() {
        let seq = seq_1d(&[&[0.0], &[1.0]]);
        let costs = model_costs(&seq, &[AffineModel::identity(ModelKind::Affine, 1)]).unwrap();
        let lp = build_coupled_lp(&seq, &costs).unwrap();
        let mut buf = Vec::new();
        lp.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("LP 4 rows 3 cols"));
        assert!(text.contains("\nC\n") && text.contains("\nE\n") && text.contains("\nF\n"));
    }

    #[test]
    fn reduced_solver_matches_full_program() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for case in 0..12 {
            let horizon = 2 + case % 3;
            let k = 1 + case % 3;
            let measures = (0..horizon)
                .map(|_| {
                    let n = rng.random_range(2..6);
                    let pts = (0..n)
                        .map(|_| Point(vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]))
                        .collect();
                    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    DiscreteMeasure::new(pts, raw.iter().map(|v| 2.0 * v / s).collect()).unwrap()
                })
                .collect();
            let seq = ObservationSequence::new(measures).unwrap();
            let mut solver = CoupledSolver::new(&seq, k).unwrap();
            for _ in 0..3 {
                let models: Vec<AffineModel> = (0..k)
                    .map(|_| AffineModel::random(ModelKind::Affine, 2, 1.0, &mut rng))
                    .collect();
                let costs = model_costs(&seq, &models).unwrap();
                let full = solve_lp(&build_coupled_lp(&seq, &costs).unwrap()).unwrap();
                let reduced = solver.solve(&costs).unwrap();
                let tol = 1e-9 * full.objective.abs().max(1e-12);
                assert!((full.objective - reduced.objective).abs() <= tol, "case {case}");
                assert!(reduced.max_residual(&seq) < 1e-9);
                assert!((reduced.cost_under(&costs) - reduced.objective).abs() <= tol);
            }
        }
    }

}
