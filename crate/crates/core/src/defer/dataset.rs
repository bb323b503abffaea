use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};

pub type ClassId = usize;

/// Features, ground-truth labels and the human's predictions for `n` points.
///
/// Features are stored row-major. Labels and human predictions live in
/// `0..num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeferDataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<ClassId>,
    human_preds: Vec<ClassId>,
    num_classes: usize,
}

impl DeferDataset {
    pub fn new(
        rows: Vec<Vec<f64>>,
        labels: Vec<ClassId>,
        human_preds: Vec<ClassId>,
        num_classes: usize,
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let features = rows.into_iter().flatten().collect();
        Self::from_flat(features, dim, labels, human_preds, num_classes)
    }

    pub fn from_flat(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<ClassId>,
        human_preds: Vec<ClassId>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return invalid("dataset must contain at least one point");
        }
        if dim == 0 {
            return invalid("feature dimension must be at least 1");
        }
        if num_classes < 2 {
            return invalid(format!("need at least 2 classes, got {num_classes}"));
        }
        if features.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                got: features.len(),
            });
        }
        if human_preds.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: human_preds.len(),
            });
        }
        if let Some(v) = features.iter().find(|v| !v.is_finite()) {
            return invalid(format!("non-finite feature value {v}"));
        }
        if let Some(c) = labels
            .iter()
            .chain(&human_preds)
            .find(|&&c| c >= num_classes)
        {
            return invalid(format!("class id {c} outside 0..{num_classes}"));
        }
        Ok(Self {
            features,
            dim,
            labels,
            human_preds,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn label(&self, i: usize) -> ClassId {
        self.labels[i]
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn human(&self, i: usize) -> ClassId {
        self.human_preds[i]
    }

    pub fn human_preds(&self) -> &[ClassId] {
        &self.human_preds
    }

    pub fn human_correct(&self, i: usize) -> bool {
        self.human_preds[i] == self.labels[i]
    }

    pub fn human_accuracy(&self) -> f64 {
        let ok = (0..self.len()).filter(|&i| self.human_correct(i)).count();
        ok as f64 / self.len() as f64
    }

    /// New dataset made of the given rows, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return invalid(format!("index {i} out of range for {} points", self.len()));
            }
            features.extend_from_slice(self.row(i));
        }
        Self::from_flat(
            features,
            self.dim,
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.human_preds[i]).collect(),
            self.num_classes,
        )
    }

    /// Concatenate two datasets with the same shape.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim || other.num_classes != self.num_classes {
            return invalid("cannot concatenate datasets of different shape");
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut human = self.human_preds.clone();
        human.extend_from_slice(&other.human_preds);
        Self::from_flat(features, self.dim, labels, human, self.num_classes)
    }
}

/// Parse the dataset CSV format: header `x0,...,x{d-1},y,h`, one row per
/// point. `num_classes` defaults to `max(label, human) + 1` (at least 2).
pub fn read_csv<R: BufRead>(reader: R, num_classes: Option<usize>) -> Result<DeferDataset> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file, expected header".into(),
    })?;
    let header = header?;
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let dim = check_header(&cols)?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut human = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        if fields.len() != dim + 2 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} fields, found {}", dim + 2, fields.len()),
            });
        }
        for f in &fields[..dim] {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("not a number: {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-finite value {f:?}"),
                });
            }
            features.push(v);
        }
        let class = |s: &str, what: &str| -> Result<ClassId> {
            s.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("{what} must be a non-negative integer, found {s:?}"),
            })
        };
        labels.push(class(fields[dim], "label")?);
        human.push(class(fields[dim + 1], "human prediction")?);
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            line: 2,
            msg: "no data rows".into(),
        });
    }
    let inferred = labels.iter().chain(&human).max().copied().unwrap_or(0) + 1;
    let num_classes = num_classes.unwrap_or(inferred.max(2));
    DeferDataset::from_flat(features, dim, labels, human, num_classes)
}

fn check_header(cols: &[&str]) -> Result<usize> {
    let bad = |msg: String| Error::Parse { line: 1, msg };
    if cols.len() < 3 {
        return Err(bad(format!(
            "header needs x0..,y,h; got {} columns",
            cols.len()
        )));
    }
    let dim = cols.len() - 2;
    for (j, c) in cols[..dim].iter().enumerate() {
        if *c != format!("x{j}") {
            return Err(bad(format!("column {j} should be x{j}, found {c:?}")));
        }
    }
    if cols[dim] != "y" || cols[dim + 1] != "h" {
        return Err(bad("last two columns must be y,h".into()));
    }
    Ok(dim)
}

pub fn write_csv<W: Write>(ds: &DeferDataset, mut w: W) -> Result<()> {
    let header: Vec<String> = (0..ds.dim()).map(|j| format!("x{j}")).collect();
    writeln!(w, "{},y,h", header.join(","))?;
    for i in 0..ds.len() {
        let feats: Vec<String> = ds.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{},{},{}", feats.join(","), ds.label(i), ds.human(i))?;
    }
    Ok(())
}
