//! Affine state-transition models `x ↦ A x + b`, their transport costs, and
//! weighted least-squares identification.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, Point};

/// Which parameters of an [`AffineModel`] are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Both `A` and `b` are estimated.
    Affine,
    /// `A` is the identity; only the shift `b` is estimated.
    Shift,
}

impl ModelKind {
    /// Number of free parameters in dimension `d`.
    pub fn param_count(self, d: usize) -> usize {
        match self {
            ModelKind::Affine => d * (d + 1),
            ModelKind::Shift => d,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(ModelKind::Affine),
            "shift" => Ok(ModelKind::Shift),
            other => Err(Error::Config(format!(
                "unknown model kind {other:?} (expected affine or shift)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Affine => "affine",
            ModelKind::Shift => "shift",
        })
    }
}

/// One ensemble's dynamics `x⁺ = A x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord", into = "ModelRecord")]
pub struct AffineModel {
    kind: ModelKind,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

/// On-disk form: `A` as a list of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelRecord {
    kind: ModelKind,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl From<AffineModel> for ModelRecord {
    fn from(m: AffineModel) -> Self {
        let d = m.dim();
        Self {
            kind: m.kind,
            a: (0..d).map(|i| m.a.row(i).iter().copied().collect()).collect(),
            b: m.b.iter().copied().collect(),
        }
    }
}

impl TryFrom<ModelRecord> for AffineModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        let d = r.b.len();
        if r.a.len() != d || r.a.iter().any(|row| row.len() != d) {
            return Err(Error::Shape(format!("model matrix is not {d}x{d}")));
        }
        let a = DMatrix::from_fn(d, d, |i, j| r.a[i][j]);
        let b = DVector::from_vec(r.b);
        match r.kind {
            ModelKind::Affine => AffineModel::affine(a, b),
            ModelKind::Shift => {
                if a != DMatrix::identity(d, d) {
                    return Err(Error::Shape("shift model must have A = I".into()));
                }
                AffineModel::shift(b)
            }
        }
    }
}

impl AffineModel {
    pub fn affine(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() || a.ncols() != b.len() {
            return Err(Error::Shape(format!(
                "A is {}x{} but b has length {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite model parameter".into()));
        }
        Ok(Self {
            kind: ModelKind::Affine,
            a,
            b,
        })
    }

    pub fn shift(b: DVector<f64>) -> Result<Self> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite model parameter".into()));
        }
        let d = b.len();
        Ok(Self {
            kind: ModelKind::Shift,
            a: DMatrix::identity(d, d),
            b,
        })
    }

    pub fn identity(kind: ModelKind, d: usize) -> Self {
        Self {
            kind,
            a: DMatrix::identity(d, d),
            b: DVector::zeros(d),
        }
    }

    /// Row-major `A` followed by `b`.
    pub fn from_rows(kind: ModelKind, a: &[&[f64]], b: &[f64]) -> Result<Self> {
        let d = b.len();
        if a.len() != d || a.iter().any(|r| r.len() != d) {
            return Err(Error::Shape(format!("A must be {d}x{d}")));
        }
        let a = DMatrix::from_fn(d, d, |i, j| a[i][j]);
        let b = DVector::from_column_slice(b);
        match kind {
            ModelKind::Affine => Self::affine(a, b),
            ModelKind::Shift => Self::shift(b),
        }
    }

    /// Entries of `(A, b)` (shift models: `b`) drawn i.i.d. `N(0, scale²)`.
    pub fn random<R: Rng + ?Sized>(kind: ModelKind, d: usize, scale: f64, rng: &mut R) -> Self {
        let mut draw = || scale * rng.sample::<f64, _>(StandardNormal);
        match kind {
            ModelKind::Affine => {
                let a = DMatrix::from_fn(d, d, |_, _| draw());
                let b = DVector::from_fn(d, |_, _| draw());
                Self { kind, a, b }
            }
            ModelKind::Shift => Self {
                kind,
                a: DMatrix::identity(d, d),
                b: DVector::from_fn(d, |_, _| draw()),
            },
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// θ as a flat vector: `A` row-major, then `b`.
    pub fn params(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * (d + 1));
        for i in 0..d {
            out.extend(self.a.row(i).iter());
        }
        out.extend(self.b.iter());
        out
    }

    /// `‖θ − θ'‖²` over the flat parameter vectors.
    pub fn sq_distance(&self, other: &AffineModel) -> f64 {
        self.params()
            .iter()
            .zip(other.params())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut v = self.b[i];
            for j in 0..d {
                v += self.a[(i, j)] * x[j];
            }
            out[i] = v;
        }
    }

    /// `A x + b`.
    pub fn apply(&self, x: &[f64]) -> Result<Point> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        Ok(Point(out))
    }

    /// `‖A x + b − y‖²`.
    pub fn cost(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let fx = self.apply(x)?;
        if y.len() != fx.dim() {
            return Err(Error::Dimension {
                expected: fx.dim(),
                got: y.len(),
            });
        }
        Ok(fx.sq_dist(y))
    }
}

/// Dense nonnegative transport cost matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} cost matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Shape("cost entries must be finite and ≥ 0".into()));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self::new(rows, cols, entries)
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

    /// Entrywise minimum of several same-shape matrices.
    pub fn pointwise_min(mats: &[CostMatrix]) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::Shape("no cost matrices".into()))?;
        if mats.iter().any(|m| m.rows != first.rows || m.cols != first.cols) {
            return Err(Error::Shape("cost matrices differ in shape".into()));
        }
        let entries = (0..first.entries.len())
            .map(|e| mats.iter().map(|m| m.entries[e]).fold(f64::INFINITY, f64::min))
            .collect();
        Self::new(first.rows, first.cols, entries)
    }
}

/// `C[i][j] = ‖A x_i + b − y_j‖²`.
pub fn cost_matrix(
    model: &AffineModel,
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
) -> Result<CostMatrix> {
    let d = model.dim();
    for m in [source, target] {
        if m.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                got: m.dim(),
            });
        }
    }
    let mut mapped = vec![0.0; d];
    let mut entries = Vec::with_capacity(source.len() * target.len());
    for x in source.points() {
        model.apply_into(x, &mut mapped);
        entries.extend(target.points().iter().map(|y| y.sq_dist(&mapped)));
    }
    CostMatrix::new(source.len(), target.len(), entries)
}

/// One weighted regression pair `(x, y, w)`.
#[derive(Debug, Clone, Copy)]
pub struct WeightedPair<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub w: f64,
}

impl<'a> WeightedPair<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64], w: f64) -> Self {
        Self { x, y, w }
    }
}

/// Accumulated weighted moments for the least-squares step.
///
/// Regressors are augmented as `z = (x, 1)`; the fit solves
/// `(Σ w z zᵀ) Θ = Σ w z yᵀ` with `Θ = [Aᵀ; bᵀ]`.
#[derive(Debug, Clone)]
pub struct WeightedMoments {
    d: usize,
    zz: DMatrix<f64>,
    zy: DMatrix<f64>,
    shift_sum: DVector<f64>,
    total_weight: f64,
}

impl WeightedMoments {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            zz: DMatrix::zeros(d + 1, d + 1),
            zy: DMatrix::zeros(d + 1, d),
            shift_sum: DVector::zeros(d),
            total_weight: 0.0,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn add(&mut self, x: &[f64], y: &[f64], w: f64) -> Result<()> {
        let d = self.d;
        if x.len() != d || y.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: if x.len() != d { x.len() } else { y.len() },
            });
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Shape(format!("invalid pair weight {w}")));
        }
        if w == 0.0 {
            return Ok(());
        }
        let z = |k: usize| if k < d { x[k] } else { 1.0 };
        for r in 0..=d {
            let wr = w * z(r);
            for c in r..=d {
                self.zz[(r, c)] += wr * z(c);
            }
            for c in 0..d {
                self.zy[(r, c)] += wr * y[c];
            }
        }
        for k in 0..d {
            self.shift_sum[k] += w * (y[k] - x[k]);
        }
        self.total_weight += w;
        Ok(())
    }

    pub fn fit(&self, kind: ModelKind) -> Result<AffineModel> {
        if self.total_weight <= 0.0 {
            return Err(Error::EmptyFit);
        }
        let d = self.d;
        match kind {
            ModelKind::Shift => AffineModel::shift(&self.shift_sum / self.total_weight),
            ModelKind::Affine => {
                let mut zz = self.zz.clone();
                for r in 0..=d {
                    for c in 0..r {
                        zz[(r, c)] = zz[(c, r)];
                    }
                }
                let svd = zz.svd(true, true);
                let smax = svd.singular_values.max();
                let pinv = svd
                    .pseudo_inverse(smax * 1e-12)
                    .map_err(|e| Error::Solver(format!("pseudo-inverse failed: {e}")))?;
                let theta = pinv * &self.zy;
                let a = theta.rows(0, d).transpose();
                let b = theta.row(d).transpose();
                AffineModel::affine(a, b)
            }
        }
    }
}

/// Minimizer of `Σ w ‖A x + b − y‖²` (or over `b` only with `A = I`).
///
/// Rank-deficient problems return the minimum-norm solution of the normal
/// equations. Zero total weight yields [`Error::EmptyFit`].
pub fn fit_weighted(pairs: &[WeightedPair<'_>], kind: ModelKind) -> Result<AffineModel> {
    let d = pairs
        .iter()
        .find(|p| p.w > 0.0)
        .map(|p| p.x.len())
        .ok_or(Error::EmptyFit)?;
    let mut moments = WeightedMoments::new(d);
    for p in pairs {
        moments.add(p.x, p.y, p.w)?;
    }
    moments.fit(kind)
}

/// `Σ w ‖A x + b − y‖²`.
pub fn weighted_objective(model: &AffineModel, pairs: &[WeightedPair<'_>]) -> Result<f64> {
    pairs
        .iter()
        .map(|p| model.cost(p.x, p.y).map(|c| p.w * c))
        .sum()
}
