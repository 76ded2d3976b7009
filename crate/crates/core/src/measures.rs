//! Aggregate snapshot observations and the dataset CSV format.
//!
//! A dataset is a sequence of `T ≥ 2` discrete measures over `ℝ^d`. Files use
//! the header `t,particle_id,x_0,...,x_{d-1},mass[,label]` with 1-based `t`,
//! `particle_id = -1` when unknown, and an optional 0-based ensemble label.

use std::fmt::Write as _;
use std::ops::Deref;
use std::path::Path;

use crate::dynamics::AffineModel;
use crate::error::{Error, Result};

/// Relative tolerance for equal total mass across snapshots.
pub const MASS_BALANCE_RTOL: f64 = 1e-9;

/// A state in `ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn sq_dist(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[f64; N]> for Point {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

/// Finitely supported nonnegative measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<Point>,
    masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Point>, masses: Vec<f64>) -> Result<Self> {
        let m = Self { points, masses };
        if let Some(msg) = m.problems().into_iter().next() {
            return Err(Error::Validation(msg));
        }
        Ok(m)
    }

    /// Unit mass on every point.
    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let masses = vec![1.0; points.len()];
        Self::new(points, masses)
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.points.len() != self.masses.len() {
            out.push(format!(
                "{} points but {} masses",
                self.points.len(),
                self.masses.len()
            ));
        }
        if self.points.is_empty() {
            out.push("measure has no points".into());
        }
        if let Some(d) = self.points.first().map(Point::dim) {
            if self.points.iter().any(|p| p.dim() != d) {
                out.push("points have mixed dimensions".into());
            }
        }
        if self.points.iter().any(|p| !p.is_finite()) {
            out.push("non-finite coordinate".into());
        }
        if let Some(&m) = self.masses.iter().find(|m| !m.is_finite() || **m < 0.0) {
            out.push(format!("invalid mass {m}"));
        } else if !self.masses.is_empty() && self.total_mass() <= 0.0 {
            out.push("total mass is zero".into());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Point::dim)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.points.clone(),
            self.masses.iter().map(|m| m * factor).collect(),
        )
    }
}

/// Ground truth attached to a dataset, used only for evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Truth {
    /// `labels[t][i]` is the ensemble of point `i` at snapshot `t`.
    pub labels: Option<Vec<Vec<usize>>>,
    pub models: Option<Vec<AffineModel>>,
}

/// The observed snapshots `μ^(1), …, μ^(T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    dim: usize,
    measures: Vec<DiscreteMeasure>,
    /// Carried through I/O for evaluation; ignored by the solver.
    particle_ids: Vec<Vec<i64>>,
    pub truth: Truth,
}

impl ObservationSequence {
    pub fn new(measures: Vec<DiscreteMeasure>) -> Result<Self> {
        let particle_ids = measures.iter().map(|m| vec![-1; m.len()]).collect();
        Self::with_metadata(measures, particle_ids, Truth::default())
    }

    pub fn with_metadata(
        measures: Vec<DiscreteMeasure>,
        particle_ids: Vec<Vec<i64>>,
        truth: Truth,
    ) -> Result<Self> {
        let dim = measures.first().map_or(0, DiscreteMeasure::dim);
        let seq = Self {
            dim,
            measures,
            particle_ids,
            truth,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of snapshots `T`.
    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    pub fn measure(&self, t: usize) -> &DiscreteMeasure {
        &self.measures[t]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.measures.iter().map(DiscreteMeasure::len).collect()
    }

    pub fn particle_ids(&self) -> &[Vec<i64>] {
        &self.particle_ids
    }

    pub fn total_mass(&self) -> f64 {
        self.measures[0].total_mass()
    }

    pub fn labels(&self) -> Option<&[Vec<usize>]> {
        self.truth.labels.as_deref()
    }

    /// Copy with every mass multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let measures = self
            .measures
            .iter()
            .map(|m| m.scaled(factor))
            .collect::<Result<Vec<_>>>()?;
        Self::with_metadata(measures, self.particle_ids.clone(), self.truth.clone())
    }

    /// Checks every invariant, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.measures.len() < 2 {
            problems.push(format!(
                "need at least 2 snapshots, got {}",
                self.measures.len()
            ));
        }
        let reference = self.measures.first().map(DiscreteMeasure::total_mass);
        for (t, m) in self.measures.iter().enumerate() {
            let tt = t + 1;
            for p in m.problems() {
                problems.push(format!("t={tt}: {p}"));
            }
            if m.dim() != self.dim {
                problems.push(format!(
                    "t={tt}: dimension {} differs from {}",
                    m.dim(),
                    self.dim
                ));
            }
            if let Some(r) = reference {
                let total = m.total_mass();
                if (total - r).abs() > MASS_BALANCE_RTOL * r.abs() {
                    problems.push(format!(
                        "t={tt}: total mass {total} differs from t=1 total {r} (mass balance)"
                    ));
                }
            }
            if self.particle_ids.get(t).map(Vec::len) != Some(m.len()) {
                problems.push(format!("t={tt}: particle id count mismatch"));
            }
        }
        if let Some(labels) = &self.truth.labels {
            if labels.len() != self.measures.len() {
                problems.push("label table has wrong number of snapshots".into());
            }
            for (t, (l, m)) in labels.iter().zip(&self.measures).enumerate() {
                if l.len() != m.len() {
                    problems.push(format!("t={}: label count mismatch", t + 1));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }
}

/// Shortest decimal rendering that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Reads a dataset CSV.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<ObservationSequence> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.len() < 4 || header[0] != "t" || header[1] != "particle_id" {
        return Err(parse_err(
            1,
            format!("expected header t,particle_id,x_0,...,mass[,label], got {header:?}"),
        ));
    }
    let has_label = header.last().map(String::as_str) == Some("label");
    let mass_col = if has_label {
        header.len() - 2
    } else {
        header.len() - 1
    };
    if header[mass_col] != "mass" {
        return Err(parse_err(1, "missing mass column".into()));
    }
    for (k, name) in header[2..mass_col].iter().enumerate() {
        if *name != format!("x_{k}") {
            return Err(parse_err(1, format!("expected column x_{k}, found {name}")));
        }
    }

    struct Row {
        t: usize,
        id: i64,
        coords: Vec<f64>,
        mass: f64,
        label: Option<usize>,
    }
    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let line = n + 2;
        let record = record?;
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let num = |k: usize| -> Result<f64> {
            record[k].parse::<f64>().map_err(|e| {
                parse_err(line, format!("column {}: {e} ({:?})", header[k], &record[k]))
            })
        };
        let t: usize = record[0]
            .parse()
            .map_err(|e| parse_err(line, format!("column t: {e}")))?;
        if t == 0 {
            return Err(parse_err(line, "t is 1-based".into()));
        }
        let id: i64 = record[1]
            .parse()
            .map_err(|e| parse_err(line, format!("column particle_id: {e}")))?;
        let coords = (2..mass_col).map(num).collect::<Result<Vec<_>>>()?;
        let mass = num(mass_col)?;
        let label = if has_label {
            Some(
                record[mass_col + 1]
                    .parse::<usize>()
                    .map_err(|e| parse_err(line, format!("column label: {e}")))?,
            )
        } else {
            None
        };
        rows.push(Row {
            t,
            id,
            coords,
            mass,
            label,
        });
    }

    let horizon = rows.iter().map(|r| r.t).max().unwrap_or(0);
    let mut points = vec![Vec::new(); horizon];
    let mut masses = vec![Vec::new(); horizon];
    let mut ids = vec![Vec::new(); horizon];
    let mut labels = vec![Vec::new(); horizon];
    for r in rows {
        points[r.t - 1].push(Point(r.coords));
        masses[r.t - 1].push(r.mass);
        ids[r.t - 1].push(r.id);
        if let Some(l) = r.label {
            labels[r.t - 1].push(l);
        }
    }
    let mut measures = Vec::with_capacity(horizon);
    for (t, (p, m)) in points.into_iter().zip(masses).enumerate() {
        if p.is_empty() {
            return Err(Error::Validation(format!("t={}: no observations", t + 1)));
        }
        measures.push(
            DiscreteMeasure::new(p, m)
                .map_err(|e| Error::Validation(format!("t={}: {e}", t + 1)))?,
        );
    }
    let truth = Truth {
        labels: has_label.then_some(labels),
        models: None,
    };
    ObservationSequence::with_metadata(measures, ids, truth)
}

/// Writes a dataset CSV; the label column appears iff truth labels are present.
pub fn save_dataset(seq: &ObservationSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "particle_id".to_string()];
    header.extend((0..seq.dim()).map(|k| format!("x_{k}")));
    header.push("mass".into());
    let labels = seq.labels();
    if labels.is_some() {
        header.push("label".into());
    }
    writer.write_record(&header)?;
    for (t, m) in seq.measures().iter().enumerate() {
        for (i, (p, &mass)) in m.points().iter().zip(m.masses()).enumerate() {
            let mut rec = vec![(t + 1).to_string(), seq.particle_ids[t][i].to_string()];
            rec.extend(p.iter().map(|&v| fmt_f64(v)));
            rec.push(fmt_f64(mass));
            if let Some(l) = labels {
                rec.push(l[t][i].to_string());
            }
            writer.write_record(&rec)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// One-line human summary, e.g. for CLI logs.
pub fn describe(seq: &ObservationSequence) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "T={} d={} sizes={:?} total_mass={}",
        seq.len(),
        seq.dim(),
        seq.sizes(),
        seq.total_mass()
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_file() {
        let f = write("t,particle_id,x_0,x_1,mass\n1,-1,0,0,1\n2,-1,1,1,1\n");
        let seq = load_dataset(f.path()).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.dim(), 2);
        assert_eq!(seq.sizes(), vec![1, 1]);
        assert!(seq.labels().is_none());
    }

    #[test]
    fn unsorted_rows_and_labels() {
        let f = write("t,particle_id,x_0,mass,label\n2,0,1.5,1,1\n1,0,0.5,1,1\n1,1,2,1,0\n2,1,3,1,0\n");
        let seq = load_dataset(f.path()).unwrap();
        assert_eq!(seq.measure(0).points()[0].0, vec![0.5]);
        assert_eq!(seq.labels().unwrap(), &[vec![1, 0], vec![1, 0]]);
    }

    #[test]
    fn mass_balance_violation() {
        let f = write("t,particle_id,x_0,mass\n1,-1,0,1\n2,-1,0,2\n");
        let err = load_dataset(f.path()).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("mass balance")), "{err}");
    }

    #[test]
    fn malformed_row() {
        let f = write("t,particle_id,x_0,mass\n1,-1,abc,1\n2,-1,0,1\n");
        let err = load_dataset(f.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn negative_mass_names_time() {
        let ms = (0..4)
            .map(|t| {
                let mass = if t == 2 { vec![-1.0, 2.0] } else { vec![0.5, 0.5] };
                DiscreteMeasure {
                    points: vec![Point(vec![0.0]), Point(vec![1.0])],
                    masses: mass,
                }
            })
            .collect::<Vec<_>>();
        let seq = ObservationSequence {
            dim: 1,
            particle_ids: ms.iter().map(|m| vec![-1; m.len()]).collect(),
            measures: ms,
            truth: Truth::default(),
        };
        let err = seq.validate().unwrap_err().to_string();
        assert!(err.contains("t=3"), "{err}");
    }

    #[test]
    fn mixed_dimensions() {
        let a = DiscreteMeasure::uniform(vec![Point(vec![0.0, 0.0])]).unwrap();
        let b = DiscreteMeasure::uniform(vec![Point(vec![0.0, 0.0, 0.0])]).unwrap();
        let err = ObservationSequence::new(vec![a, b]).unwrap_err().to_string();
        assert!(err.contains("dimension"), "{err}");
    }

    #[test]
    fn equal_mass_sequence_ok() {
        let a = DiscreteMeasure::new(vec![Point(vec![0.0]), Point(vec![1.0])], vec![0.3, 0.7]);
        let b = DiscreteMeasure::new(vec![Point(vec![2.0])], vec![1.0]);
        assert!(ObservationSequence::new(vec![a.unwrap(), b.unwrap()]).is_ok());
    }

    #[test]
    fn single_snapshot_rejected() {
        let a = DiscreteMeasure::uniform(vec![Point(vec![0.0])]).unwrap();
        assert!(ObservationSequence::new(vec![a]).is_err());
    }

    #[test]
    fn label_column_presence_follows_truth() {
        let a = DiscreteMeasure::uniform(vec![Point(vec![0.1])]).unwrap();
        let seq = ObservationSequence::new(vec![a.clone(), a.clone()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        save_dataset(&seq, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,particle_id,x_0,mass");

        let labelled = ObservationSequence::with_metadata(
            vec![a.clone(), a],
            vec![vec![4], vec![4]],
            Truth {
                labels: Some(vec![vec![0], vec![0]]),
                models: None,
            },
        )
        .unwrap();
        save_dataset(&labelled, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,particle_id,x_0,mass,label");
        assert_eq!(load_dataset(&p).unwrap(), labelled);
    }

    #[test]
    fn float_rendering_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-30, -2.5e300, 123456.789, 5e-324, 0.0, -0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
