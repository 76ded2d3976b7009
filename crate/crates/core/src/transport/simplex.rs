//! Revised primal simplex for `min cᵀx  s.t.  E x = f, x ≥ 0`.
//!
//! The basis inverse is kept as a sparse LU factorization followed by a file
//! of product-form eta updates, refactorized periodically. Phase 1 starts from
//! an all-artificial basis; redundant equality rows keep their artificial
//! basic at zero for the rest of the solve. The solver retains its final
//! basis, so a later call with different costs skips phase 1 entirely.

use super::lu::{LuFactors, SparseCol};
use crate::error::{Error, Result};

/// Entries of `B⁻¹a_q` below this fraction of `max(1, max|α|)` are treated
/// as zero, which also bounds pivots away from zero.
const ZERO_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
/// Index offset of artificial variables.
const ART: usize = 1 << 60;
/// Relative size of the shifts applied to degenerate basics.
const PERTURBATION: f64 = 1e-7;
const MAX_PERTURBED_PASSES: usize = 3;
const REFACTOR_EVERY: usize = 40;
const PRICING_BLOCKS: usize = 128;
const MIN_PRICING_BLOCK: usize = 64;

/// Compressed-column sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub rows: usize,
    pub cols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cols];
        for &(i, j, v) in triplets {
            assert!(i < rows && j < cols, "triplet ({i}, {j}) out of range");
            per_col[j].push((i, v));
        }
        let mut col_ptr = Vec::with_capacity(cols + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        for mut c in per_col {
            c.sort_unstable_by_key(|e| e.0);
            let mut k = 0;
            while k < c.len() {
                let i = c[k].0;
                let mut v = 0.0;
                while k < c.len() && c[k].0 == i {
                    v += c[k].1;
                    k += 1;
                }
                row_idx.push(i);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        Self {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.cols).flat_map(move |j| self.col(j).map(move |(i, v)| (i, j, v)))
    }
}

/// Outcome of a successful solve.
#[derive(Debug, Clone)]
pub struct SimplexSolution {
    /// Values of the structural variables, negatives in `[-1e-12, 0)` clamped to zero.
    pub x: Vec<f64>,
    /// `cᵀx` evaluated before clamping.
    pub objective: f64,
    /// Row duals `y` with `cᵀ − yᵀE ≥ 0` on structurals at optimality.
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub phase1_iterations: usize,
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    others: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

/// Revised simplex solver bound to one constraint system `E x = f`.
#[derive(Debug, Clone)]
pub struct RevisedSimplex {
    /// Constraint matrix with rows flipped so that every rhs entry is ≥ 0.
    matrix: CscMatrix,
    rhs: Vec<f64>,
    /// Right-hand side the basic solution is computed from; differs from
    /// `rhs` only while degenerate basics are perturbed.
    rhs_work: Vec<f64>,
    row_sign: Vec<f64>,
    /// Variable `j < n` is structural, `ART + i` is the artificial of row `i`.
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    lu: Option<LuFactors>,
    etas: Vec<Eta>,
    x_basic: Vec<f64>,
    feasible_basis: bool,
    max_iters: Option<usize>,
    stall_limit: usize,
    rhs_scale: f64,
    price_start: usize,
    work: Vec<f64>,
}

/// How a pivoting loop ended.
enum Outcome {
    Optimal(usize),
    /// Refactorization exposed a primal infeasible basis (round-off drift).
    Drift(usize),
}

impl RevisedSimplex {
    pub fn new(mut matrix: CscMatrix, rhs: Vec<f64>) -> Self {
        assert_eq!(matrix.rows, rhs.len());
        let m = matrix.rows;
        let n = matrix.cols;
        let row_sign: Vec<f64> = rhs.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let rhs: Vec<f64> = rhs.iter().zip(&row_sign).map(|(v, s)| v * s).collect();
        for (v, &i) in matrix.values.iter_mut().zip(&matrix.row_idx) {
            *v *= row_sign[i];
        }
        let rhs_scale = rhs.iter().fold(0.0f64, |a, &v| a.max(v)).max(1e-300);
        let mut s = Self {
            matrix,
            rhs_work: rhs.clone(),
            rhs,
            row_sign,
            basis: Vec::new(),
            is_basic: vec![false; n],
            lu: None,
            etas: Vec::new(),
            x_basic: Vec::new(),
            feasible_basis: false,
            max_iters: None,
            stall_limit: 50 * m.max(1),
            rhs_scale,
            price_start: 0,
            work: vec![0.0; m],
        };
        s.reset();
        s
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = Some(max_iters);
        self
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols
    }

    /// Appends structural columns (in the original row orientation). The
    /// current basis stays valid, so a following solve warm-starts.
    pub fn add_columns(&mut self, cols: &[SparseCol]) {
        for c in cols {
            for &(i, v) in c {
                assert!(i < self.rows(), "row {i} out of range");
                self.matrix.row_idx.push(i);
                self.matrix.values.push(v * self.row_sign[i]);
            }
            self.matrix.col_ptr.push(self.matrix.row_idx.len());
        }
        self.matrix.cols += cols.len();
        self.is_basic.resize(self.matrix.cols, false);
    }

    /// Drops the nonbasic structural columns for which `keep` is false; basic
    /// columns always survive. Returns the old index of every kept column.
    pub fn retain_columns(&mut self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        let n = self.cols();
        let mut new_index = vec![usize::MAX; n];
        let mut kept = Vec::new();
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for j in 0..n {
            if self.is_basic[j] || keep(j) {
                new_index[j] = kept.len();
                kept.push(j);
                for (i, v) in self.matrix.col(j) {
                    row_idx.push(i);
                    values.push(v);
                }
                col_ptr.push(row_idx.len());
            }
        }
        self.matrix = CscMatrix {
            rows: self.rows(),
            cols: kept.len(),
            col_ptr,
            row_idx,
            values,
        };
        for v in self.basis.iter_mut() {
            if *v < ART {
                *v = new_index[*v];
            }
        }
        self.is_basic = vec![false; kept.len()];
        for &v in &self.basis {
            if v < ART {
                self.is_basic[v] = true;
            }
        }
        self.price_start = 0;
        kept
    }

    /// Whether structural variable `j` is currently basic.
    pub fn is_basic(&self, j: usize) -> bool {
        self.is_basic[j]
    }

    /// Forgets any warm-start basis.
    pub fn reset(&mut self) {
        let m = self.rows();
        self.is_basic.iter_mut().for_each(|b| *b = false);
        self.basis = (0..m).map(|i| ART + i).collect();
        self.lu = None;
        self.etas.clear();
        self.feasible_basis = false;
    }

    fn column(&self, var: usize) -> SparseCol {
        if var < ART {
            self.matrix.col(var).collect()
        } else {
            vec![(var - ART, 1.0)]
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.rows();
        loop {
            let cols: Vec<SparseCol> = self.basis.iter().map(|&v| self.column(v)).collect();
            match LuFactors::factorize(m, &cols) {
                Ok(lu) => {
                    self.lu = Some(lu);
                    self.etas.clear();
                    break;
                }
                Err(sing) => {
                    // Swap the dependent columns for artificials on the uncovered rows.
                    for (&pos, &row) in sing.cols.iter().zip(&sing.rows) {
                        let old = self.basis[pos];
                        if old < ART {
                            self.is_basic[old] = false;
                        }
                        self.basis[pos] = ART + row;
                    }
                    self.feasible_basis = false;
                }
            }
        }
        self.recompute_primal();
        Ok(())
    }

    fn recompute_primal(&mut self) {
        let mut x = self.rhs_work.clone();
        self.ftran(&mut x);
        self.x_basic = x;
    }

    fn ftran(&mut self, v: &mut [f64]) {
        let Self { lu, work, .. } = self;
        lu.as_ref().expect("factorized").solve(v, work);
        for eta in &self.etas {
            let xp = v[eta.pos] / eta.pivot;
            if xp != 0.0 {
                for &(i, a) in &eta.others {
                    v[i] -= a * xp;
                }
            }
            v[eta.pos] = xp;
        }
    }

    fn btran(&mut self, v: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut acc = v[eta.pos];
            for &(i, a) in &eta.others {
                acc -= a * v[i];
            }
            v[eta.pos] = acc / eta.pivot;
        }
        let Self { lu, work, .. } = self;
        lu.as_ref().expect("factorized").solve_transposed(v, work);
    }

    fn cost_of(&self, var: usize, phase: Phase, costs: &[f64]) -> f64 {
        match (phase, var < ART) {
            (Phase::One, true) => 0.0,
            (Phase::One, false) => 1.0,
            (Phase::Two, true) => costs[var],
            (Phase::Two, false) => 0.0,
        }
    }

    fn objective(&self, phase: Phase, costs: &[f64]) -> f64 {
        self.basis
            .iter()
            .zip(&self.x_basic)
            .map(|(&v, &x)| self.cost_of(v, phase, costs) * x)
            .sum()
    }

    /// Largest violation of `x_B ≥ 0`, counting basic artificials in phase 2.
    fn primal_violation(&self, phase: Phase) -> f64 {
        self.basis
            .iter()
            .zip(&self.x_basic)
            .map(|(&v, &x)| if phase == Phase::Two && v >= ART { x.abs() } else { -x })
            .fold(0.0, f64::max)
    }

    fn drift_tol(&self) -> f64 {
        1e3 * FEAS_TOL * self.rhs_scale
    }

    /// Solves with the given structural costs, warm-starting from the basis
    /// left by the previous call when it is still primal feasible.
    pub fn solve(&mut self, costs: &[f64]) -> Result<SimplexSolution> {
        let n = self.cols();
        if costs.len() != n {
            return Err(Error::Shape(format!(
                "cost vector has length {}, expected {n}",
                costs.len()
            )));
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Solver("non-finite cost coefficient".into()));
        }

        let mut phase1_iterations = self.make_feasible()?;
        let mut phase2_iterations = 0;
        let mut restarts = 0;
        let mut pass = 0;
        loop {
            // perturbed primal pass, then a dual pass repairing what removing
            // the perturbation broke; a pass without repairs is optimal
            let mut outcome = if pass < MAX_PERTURBED_PASSES {
                self.perturb(pass);
                let out = self.iterate(Phase::Two, costs);
                self.unperturb()?;
                out?
            } else {
                self.iterate(Phase::Two, costs)?
            };
            if let Outcome::Optimal(k) = outcome {
                phase2_iterations += k;
                outcome = self.dual_iterate(costs)?;
                if let Outcome::Optimal(0) = outcome {
                    self.refactor()?;
                    if self.feasible_basis && self.primal_violation(Phase::Two) <= FEAS_TOL * self.rhs_scale {
                        break;
                    }
                    outcome = Outcome::Drift(0);
                }
            }
            match outcome {
                Outcome::Optimal(k) => {
                    phase2_iterations += k;
                    pass += 1;
                }
                Outcome::Drift(k) => {
                    phase2_iterations += k;
                    restarts += 1;
                    if restarts > 2 {
                        return Err(Error::Solver("simplex lost primal feasibility repeatedly".into()));
                    }
                    self.reset();
                    phase1_iterations += self.make_feasible()?;
                    pass = 0;
                }
            }
        }

        let mut duals: Vec<f64> = self.basis.iter().map(|&v| self.cost_of(v, Phase::Two, costs)).collect();
        self.btran(&mut duals);
        for (y, s) in duals.iter_mut().zip(&self.row_sign) {
            *y *= s;
        }
        let mut x = vec![0.0; n];
        for (&v, &val) in self.basis.iter().zip(&self.x_basic) {
            if v < ART {
                x[v] = val;
            }
        }
        let objective = x.iter().zip(costs).map(|(x, c)| x * c).sum();
        for v in x.iter_mut() {
            if *v < 0.0 && *v >= -1e-12 {
                *v = 0.0;
            }
        }
        Ok(SimplexSolution {
            x,
            objective,
            duals,
            iterations: phase1_iterations + phase2_iterations,
            phase1_iterations,
        })
    }

    /// Shifts every basic structural up by a small pseudo-random amount and
    /// moves the working right-hand side along, so that the basic solution
    /// stays consistent and no structural sits at zero.
    fn perturb(&mut self, pass: usize) {
        let mut state = 0x9e37_79b9_7f4a_7c15u64 ^ (pass as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        let base = PERTURBATION * self.rhs_scale;
        let mut rhs_work = self.rhs.clone();
        for pos in 0..self.rows() {
            let v = self.basis[pos];
            if v >= ART {
                continue;
            }
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let delta = base * (1.0 + (state >> 11) as f64 / (1u64 << 53) as f64);
            self.x_basic[pos] += delta;
            for (i, a) in self.matrix.col(v) {
                rhs_work[i] += a * delta;
            }
        }
        self.rhs_work = rhs_work;
    }

    fn unperturb(&mut self) -> Result<()> {
        self.rhs_work.clone_from(&self.rhs);
        self.refactor()
    }

    /// Dual simplex from a dual feasible basis until `x_B ≥ 0` (and basic
    /// artificials are back at zero).
    fn dual_iterate(&mut self, costs: &[f64]) -> Result<Outcome> {
        let m = self.rows();
        let n = self.cols();
        let feas_tol = FEAS_TOL * self.rhs_scale;
        let mut iterations = 0;
        let mut rho = vec![0.0; m];
        let mut duals = vec![0.0; m];
        let mut column = vec![0.0; m];
        loop {
            if iterations >= self.max_iters.unwrap_or(50 * (m + n).max(100)) {
                return Err(Error::Solver("dual simplex iteration cap exceeded".into()));
            }
            if self.etas.len() >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let leaving = (0..m)
                .filter_map(|p| {
                    let x = self.x_basic[p];
                    let bad = if self.basis[p] >= ART { x.abs() } else { -x };
                    (bad > feas_tol).then_some((p, bad))
                })
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            let Some((r, _)) = leaving else {
                return Ok(Outcome::Optimal(iterations));
            };
            let dir = self.x_basic[r].signum();

            rho.iter_mut().for_each(|v| *v = 0.0);
            rho[r] = 1.0;
            self.btran(&mut rho);
            for (pos, &v) in self.basis.iter().enumerate() {
                duals[pos] = self.cost_of(v, Phase::Two, costs);
            }
            self.btran(&mut duals);
            let rmax = rho.iter().fold(1.0f64, |a, v| a.max(v.abs()));

            // entering: dual ratio test over the pivot row
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..n {
                if self.is_basic[j] {
                    continue;
                }
                let mut alpha = 0.0;
                let mut d = costs[j];
                for (i, v) in self.matrix.col(j) {
                    alpha += rho[i] * v;
                    d -= duals[i] * v;
                }
                let a = alpha * dir;
                if a <= ZERO_TOL * rmax {
                    continue;
                }
                let ratio = d.max(0.0) / a;
                let better = match best {
                    None => true,
                    Some((_, br, ba)) => ratio < br || (ratio == br && a > ba),
                };
                if better {
                    best = Some((j, ratio, a));
                }
            }
            let Some((q, _, _)) = best else {
                return Ok(Outcome::Drift(iterations));
            };

            column.iter_mut().for_each(|v| *v = 0.0);
            for (i, v) in self.matrix.col(q) {
                column[i] = v;
            }
            self.ftran(&mut column);
            let amax = column.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for v in column.iter_mut() {
                if v.abs() <= ZERO_TOL * amax {
                    *v = 0.0;
                }
            }
            if column[r] * dir <= 0.0 {
                return Ok(Outcome::Drift(iterations));
            }
            let theta = self.x_basic[r] / column[r];
            self.pivot(r, q, theta, &column, feas_tol);
            iterations += 1;
        }
    }

    fn pivot(&mut self, p: usize, q: usize, theta: f64, column: &[f64], feas_tol: f64) {
        for (x, &a) in self.x_basic.iter_mut().zip(column) {
            *x -= theta * a;
        }
        self.x_basic[p] = theta;
        let old = self.basis[p];
        if old < ART {
            self.is_basic[old] = false;
        }
        self.is_basic[q] = true;
        self.basis[p] = q;
        self.etas.push(Eta {
            pos: p,
            pivot: column[p],
            others: column
                .iter()
                .enumerate()
                .filter(|&(i, &a)| i != p && a != 0.0)
                .map(|(i, &a)| (i, a))
                .collect(),
        });
        for x in self.x_basic.iter_mut() {
            if *x < 0.0 && *x > -feas_tol {
                *x = 0.0;
            }
        }
    }

    /// Brings the current basis to primal feasibility (phase 1) if needed.
    /// Returns the number of phase-1 pivots.
    pub fn make_feasible(&mut self) -> Result<usize> {
        let m = self.rows();
        self.refactor()?;
        let tol = FEAS_TOL * self.rhs_scale;
        if self.feasible_basis && self.primal_violation(Phase::Two) <= tol {
            return Ok(0);
        }
        if self.primal_violation(Phase::One) > tol {
            self.reset();
            self.refactor()?;
        }
        let mut iterations = 0;
        for attempt in 0..2 {
            match self.iterate(Phase::One, &[])? {
                Outcome::Optimal(k) => {
                    iterations += k;
                    break;
                }
                Outcome::Drift(k) => {
                    iterations += k;
                    if attempt == 1 {
                        return Err(Error::Solver("phase 1 lost primal feasibility".into()));
                    }
                    self.reset();
                    self.refactor()?;
                }
            }
        }
        let infeasibility: f64 = self
            .basis
            .iter()
            .zip(&self.x_basic)
            .filter(|(&v, _)| v >= ART)
            .map(|(_, &x)| x.abs())
            .sum();
        if infeasibility > tol * m.max(1) as f64 {
            self.feasible_basis = false;
            return Err(Error::Solver(format!(
                "linear program is infeasible (phase-1 residual {infeasibility:.3e})"
            )));
        }
        self.feasible_basis = true;
        Ok(iterations)
    }

    /// Reduced-cost scan. Dantzig over cyclic blocks of columns, stopping
    /// after the first block with a candidate; Bland scans everything and
    /// takes the smallest index.
    fn price(&mut self, duals: &[f64], phase: Phase, costs: &[f64], cost_scale: f64, bland: bool) -> Option<usize> {
        let n = self.cols();
        if n == 0 {
            return None;
        }
        // a column prices out when d_j < -OPT_TOL·(|c_j| + 1e-5·max|c|)
        let improving = |j: usize| -> Option<f64> {
            let (c, tol) = match phase {
                Phase::One => (0.0, OPT_TOL),
                Phase::Two => (costs[j], OPT_TOL * (costs[j].abs() + 1e-5 * cost_scale)),
            };
            let mut d = c;
            for (i, v) in self.matrix.col(j) {
                d -= duals[i] * v;
            }
            (d < -tol).then_some(d)
        };
        if bland {
            return (0..n).find(|&j| !self.is_basic[j] && improving(j).is_some());
        }
        let block = n.div_ceil(PRICING_BLOCKS).max(MIN_PRICING_BLOCK).min(n);
        let mut best: Option<(usize, f64)> = None;
        let mut scanned = 0;
        let mut j = self.price_start % n;
        while scanned < n {
            let end = scanned + block;
            while scanned < end.min(n) {
                if !self.is_basic[j] {
                    if let Some(d) = improving(j) {
                        if best.is_none_or(|(_, b)| d < b) {
                            best = Some((j, d));
                        }
                    }
                }
                scanned += 1;
                j += 1;
                if j == n {
                    j = 0;
                }
            }
            if best.is_some() {
                break;
            }
        }
        self.price_start = j;
        best.map(|(j, _)| j)
    }

    /// Leaving position and step length. Harris two-pass: the first pass
    /// finds the largest step allowed with bounds relaxed by `delta`, the
    /// second takes the largest pivot among positions blocking within it.
    /// Basic artificials in phase 2 must stay at zero, so any nonzero entry
    /// makes them block at step zero.
    fn ratio_test(&self, column: &[f64], phase: Phase, delta: f64, bland: bool) -> Option<(usize, f64)> {
        let m = self.rows();
        // (position, ratio, pivot magnitude, relaxed bound)
        let blocking = (0..m).filter_map(|p| {
            let a = column[p];
            if phase == Phase::Two && self.basis[p] >= ART {
                return (a != 0.0).then(|| (p, 0.0, a.abs(), delta / a.abs()));
            }
            (a > 0.0).then(|| {
                let x = self.x_basic[p].max(0.0);
                (p, x / a, a, (x + delta) / a)
            })
        });
        if bland {
            return blocking
                .min_by(|a, b| a.1.total_cmp(&b.1).then(self.basis[a.0].cmp(&self.basis[b.0])))
                .map(|(p, r, _, _)| (p, r));
        }
        let theta_max = blocking.clone().map(|b| b.3).fold(f64::INFINITY, f64::min);
        if theta_max == f64::INFINITY {
            return None;
        }
        blocking
            .filter(|b| b.1 <= theta_max)
            .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
            .map(|(p, r, _, _)| (p, r))
    }

    fn iterate(&mut self, phase: Phase, costs: &[f64]) -> Result<Outcome> {
        let m = self.rows();
        let n = self.cols();
        let cost_scale = match phase {
            Phase::One => 1.0,
            Phase::Two => costs.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1e-300),
        };
        let feas_tol = FEAS_TOL * self.rhs_scale;

        let mut iterations = 0;
        let mut bland = false;
        let mut stall = 0usize;
        let mut obj = self.objective(phase, costs);
        let mut best_obj = obj;
        let mut duals = vec![0.0; m];
        let mut column = vec![0.0; m];

        loop {
            let max_iters = self.max_iters.unwrap_or(50 * (m + n).max(100));
            if iterations >= max_iters {
                return Err(Error::Solver(format!(
                    "simplex iteration cap {} exceeded ({phase:?}, {m} rows, {n} cols, objective {obj:.6e}, bland={bland})",
                    max_iters
                )));
            }
            if self.etas.len() >= REFACTOR_EVERY {
                self.refactor()?;
                if self.primal_violation(phase) > self.drift_tol() {
                    return Ok(Outcome::Drift(iterations));
                }
                obj = self.objective(phase, costs);
            }

            // duals y = B^{-T} c_B
            for (pos, &v) in self.basis.iter().enumerate() {
                duals[pos] = self.cost_of(v, phase, costs);
            }
            self.btran(&mut duals);

            // artificials never re-enter
            let Some(q) = self.price(&duals, phase, costs, cost_scale, bland) else {
                return Ok(Outcome::Optimal(iterations));
            };
            let mut dq = self.cost_of(q, phase, costs);
            column.iter_mut().for_each(|v| *v = 0.0);
            for (i, v) in self.matrix.col(q) {
                column[i] = v;
                dq -= duals[i] * v;
            }
            self.ftran(&mut column);
            // entries at round-off level are zeros
            let amax = column.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for v in column.iter_mut() {
                if v.abs() <= ZERO_TOL * amax {
                    *v = 0.0;
                }
            }

            let Some((p, theta)) = self.ratio_test(&column, phase, feas_tol, bland) else {
                return Err(Error::Solver(format!(
                    "linear program is unbounded along variable {q}"
                )));
            };

            self.pivot(p, q, theta, &column, feas_tol);
            iterations += 1;

            obj += theta * dq;
            if obj < best_obj - 1e-12 * best_obj.abs().max(cost_scale * 1e-6) {
                stall = 0;
                bland = false;
                best_obj = obj;
            } else {
                stall += 1;
                if stall >= self.stall_limit {
                    bland = true;
                }
            }
        }
    }
}
