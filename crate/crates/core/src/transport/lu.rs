//! Sparse LU factorization of simplex basis matrices.
//!
//! Right-looking Gaussian elimination with a Markowitz-style pivot search and
//! threshold partial pivoting. Basis matrices of the coupled transport program
//! are close to triangular, so most steps are column or row singletons and the
//! factors stay nearly as sparse as the basis itself.

/// Sparse column: `(row, value)` pairs in arbitrary order.
pub type SparseCol = Vec<(usize, f64)>;

const DROP_TOL: f64 = 1e-14;
const THRESHOLD: f64 = 0.1;
const MAX_SEARCH_COLS: usize = 4;

#[derive(Debug, Clone)]
struct Step {
    row: usize,
    col: usize,
    pivot: f64,
    /// Multipliers `(row, l)` eliminating `row` from the rows below it.
    lower: Vec<(usize, f64)>,
    /// Off-diagonal entries `(col, u)` of the pivot row in later columns.
    upper: Vec<(usize, f64)>,
}

/// `P B Q = L U`, stored as a sequence of elimination steps.
#[derive(Debug, Clone)]
pub struct LuFactors {
    dim: usize,
    steps: Vec<Step>,
}

/// Factorization failed because the matrix is (numerically) singular.
///
/// Carries the columns and rows that could not be pivoted, so the caller can
/// patch the basis with unit columns on `rows`.
#[derive(Debug, Clone)]
pub struct Singular {
    pub cols: Vec<usize>,
    pub rows: Vec<usize>,
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.steps
            .iter()
            .map(|s| 1 + s.lower.len() + s.upper.len())
            .sum()
    }

    /// Factorizes the square matrix whose columns are `cols`.
    pub fn factorize(dim: usize, cols: &[SparseCol]) -> Result<Self, Singular> {
        assert_eq!(cols.len(), dim, "basis must be square");

        let mut active: Vec<Vec<(usize, f64)>> = cols
            .iter()
            .map(|c| {
                let mut c: Vec<(usize, f64)> =
                    c.iter().copied().filter(|(_, v)| v.abs() > DROP_TOL).collect();
                c.sort_unstable_by_key(|e| e.0);
                // merge duplicate rows
                c.dedup_by(|b, a| {
                    if a.0 == b.0 {
                        a.1 += b.1;
                        true
                    } else {
                        false
                    }
                });
                c
            })
            .collect();
        let mut row_pattern: Vec<Vec<usize>> = vec![Vec::new(); dim];
        let mut row_count = vec![0usize; dim];
        for (j, c) in active.iter().enumerate() {
            for &(i, _) in c {
                row_pattern[i].push(j);
                row_count[i] += 1;
            }
        }
        let mut row_done = vec![false; dim];
        let mut col_done = vec![false; dim];
        let mut scatter = vec![usize::MAX; dim];
        let mut steps = Vec::with_capacity(dim);

        // Columns bucketed by active count; stale entries are skipped lazily.
        let mut col_buckets: Vec<Vec<usize>> = vec![Vec::new(); dim + 2];
        for (j, c) in active.iter().enumerate() {
            col_buckets[c.len().min(dim + 1)].push(j);
        }
        // no nonempty bucket below this count
        let mut min_bucket = 1;
        let mut row_singletons: Vec<usize> = (0..dim).filter(|&i| row_count[i] == 1).collect();

        let mut failed_cols = Vec::new();

        for _ in 0..dim {
            let mut choice: Option<(usize, usize)> = None;

            // Row singletons first: no fill is possible in the pivot row.
            while let Some(r) = row_singletons.pop() {
                if row_done[r] || row_count[r] != 1 {
                    continue;
                }
                let Some(&c) = row_pattern[r].iter().find(|&&j| {
                    !col_done[j] && active[j].iter().any(|&(i, _)| i == r)
                }) else {
                    continue;
                };
                let col_max = active[c].iter().fold(0.0f64, |m, e| m.max(e.1.abs()));
                let v = active[c].iter().find(|e| e.0 == r).unwrap().1;
                if v.abs() >= 0.01 * col_max {
                    choice = Some((r, c));
                    break;
                }
            }

            if choice.is_none() {
                choice = Self::markowitz_search(
                    &mut col_buckets,
                    &mut min_bucket,
                    &active,
                    &col_done,
                    &row_count,
                    &mut failed_cols,
                );
            }
            let Some((r, c)) = choice else {
                break;
            };

            let pivot = active[c].iter().find(|e| e.0 == r).unwrap().1;
            let pivot_col = std::mem::take(&mut active[c]);
            col_done[c] = true;
            row_done[r] = true;

            let lower: Vec<(usize, f64)> = pivot_col
                .iter()
                .filter(|e| e.0 != r)
                .map(|&(i, v)| (i, v / pivot))
                .collect();
            for &(i, _) in &pivot_col {
                row_count[i] -= 1;
                if row_count[i] == 1 && !row_done[i] {
                    row_singletons.push(i);
                }
            }

            let mut upper = Vec::new();
            let pattern = std::mem::take(&mut row_pattern[r]);
            for j in pattern {
                if col_done[j] {
                    continue;
                }
                let Some(pos) = active[j].iter().position(|e| e.0 == r) else {
                    continue;
                };
                let (_, u) = active[j].swap_remove(pos);
                upper.push((j, u));

                // col_j -= u * lower
                for (k, &(i, _)) in active[j].iter().enumerate() {
                    scatter[i] = k;
                }
                for &(i, l) in &lower {
                    let delta = l * u;
                    if scatter[i] != usize::MAX {
                        active[j][scatter[i]].1 -= delta;
                    } else {
                        active[j].push((i, -delta));
                        row_pattern[i].push(j);
                        row_count[i] += 1;
                    }
                }
                for &(i, _) in active[j].iter() {
                    scatter[i] = usize::MAX;
                }
                let before = active[j].len();
                active[j].retain(|&(i, v)| {
                    if v.abs() <= DROP_TOL {
                        row_count[i] -= 1;
                        false
                    } else {
                        true
                    }
                });
                if active[j].len() != before {
                    for &(i, _) in &lower {
                        if row_count[i] == 1 && !row_done[i] {
                            row_singletons.push(i);
                        }
                    }
                }
                let count = active[j].len().min(dim + 1);
                col_buckets[count].push(j);
                min_bucket = min_bucket.min(count.max(1));
            }
            for &(i, _) in &lower {
                if row_count[i] == 1 && !row_done[i] {
                    row_singletons.push(i);
                }
            }

            steps.push(Step {
                row: r,
                col: c,
                pivot,
                lower,
                upper,
            });
        }

        if steps.len() < dim {
            let cols = (0..dim).filter(|&j| !col_done[j]).collect();
            let rows = (0..dim).filter(|&i| !row_done[i]).collect();
            return Err(Singular { cols, rows });
        }
        Ok(Self { dim, steps })
    }

    fn markowitz_search(
        col_buckets: &mut [Vec<usize>],
        min_bucket: &mut usize,
        active: &[Vec<(usize, f64)>],
        col_done: &[bool],
        row_count: &[usize],
        failed: &mut Vec<usize>,
    ) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, usize)> = None; // (cost, row, col)
        let mut searched = 0;
        while *min_bucket < col_buckets.len() && col_buckets[*min_bucket].is_empty() {
            *min_bucket += 1;
        }
        for count in *min_bucket..col_buckets.len() {
            let mut idx = 0;
            while idx < col_buckets[count].len() {
                let j = col_buckets[count][idx];
                if col_done[j] || active[j].len().min(col_buckets.len() - 1) != count {
                    col_buckets[count].swap_remove(idx);
                    continue;
                }
                idx += 1;
                if failed.contains(&j) {
                    continue;
                }
                let col_max = active[j].iter().fold(0.0f64, |m, e| m.max(e.1.abs()));
                let mut found = false;
                for &(i, v) in &active[j] {
                    if v.abs() < THRESHOLD * col_max || v.abs() <= DROP_TOL {
                        continue;
                    }
                    found = true;
                    let cost = (row_count[i] - 1) * (count - 1);
                    if best.is_none_or(|b| cost < b.0) {
                        best = Some((cost, i, j));
                    }
                }
                if !found {
                    failed.push(j);
                    continue;
                }
                searched += 1;
                if best.is_some_and(|b| b.0 == 0) || searched >= MAX_SEARCH_COLS {
                    return best.map(|b| (b.1, b.2));
                }
            }
            if best.is_some_and(|b| b.0 <= (count - 1) * (count - 1)) {
                break;
            }
        }
        best.map(|b| (b.1, b.2))
    }

    /// Solves `B x = b` in place. On input `rhs` is indexed by row, on output
    /// by column (basis position).
    pub fn solve(&self, rhs: &mut [f64], work: &mut [f64]) {
        debug_assert_eq!(rhs.len(), self.dim);
        for s in &self.steps {
            let br = rhs[s.row];
            if br != 0.0 {
                for &(i, l) in &s.lower {
                    rhs[i] -= l * br;
                }
            }
        }
        for s in self.steps.iter().rev() {
            let mut v = rhs[s.row];
            for &(j, u) in &s.upper {
                v -= u * work[j];
            }
            work[s.col] = v / s.pivot;
        }
        rhs.copy_from_slice(&work[..self.dim]);
    }

    /// Solves `Bᵀ y = c` in place. On input `rhs` is indexed by column (basis
    /// position), on output by row.
    pub fn solve_transposed(&self, rhs: &mut [f64], work: &mut [f64]) {
        debug_assert_eq!(rhs.len(), self.dim);
        for s in &self.steps {
            let v = rhs[s.col] / s.pivot;
            work[s.row] = v;
            if v != 0.0 {
                for &(j, u) in &s.upper {
                    rhs[j] -= u * v;
                }
            }
        }
        for s in self.steps.iter().rev() {
            let mut acc = 0.0;
            for &(i, l) in &s.lower {
                acc += l * work[i];
            }
            work[s.row] -= acc;
        }
        rhs.copy_from_slice(&work[..self.dim]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_to_cols(a: &[Vec<f64>]) -> Vec<SparseCol> {
        let n = a.len();
        (0..n)
            .map(|j| {
                (0..n)
                    .filter(|&i| a[i][j] != 0.0)
                    .map(|i| (i, a[i][j]))
                    .collect()
            })
            .collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn random_sparse(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                p.swap(i, rng.random_range(0..=i));
            }
            p
        };
        for (i, &p) in perm.iter().enumerate() {
            a[i][p] = if rng.random_bool(0.5) { 1.0 } else { -2.0 };
        }
        for _ in 0..2 * n {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            a[i][j] += rng.random_range(-1.0..1.0);
        }
        a
    }

    #[test]
    fn solves_random_sparse_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 20, 60] {
            let a = random_sparse(n, &mut rng);
            let lu = LuFactors::factorize(n, &dense_to_cols(&a)).expect("nonsingular");
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut b = matvec(&a, &x);
            let mut work = vec![0.0; n];
            lu.solve(&mut b, &mut work);
            for (u, v) in b.iter().zip(&x) {
                assert!((u - v).abs() < 1e-9, "{u} vs {v}");
            }
            // transposed
            let at: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect();
            let mut c = matvec(&at, &x);
            lu.solve_transposed(&mut c, &mut work);
            for (u, v) in c.iter().zip(&x) {
                assert!((u - v).abs() < 1e-9, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn reports_singular_columns() {
        let a = vec![
            vec![1.0, 2.0, 0.0],
            vec![1.0, 2.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let err = LuFactors::factorize(3, &dense_to_cols(&a)).unwrap_err();
        assert_eq!(err.cols.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }
}
