//! Dataset ingestion and histogram construction.
//!
//! A dataset becomes a probability distribution by binning every dimension
//! independently into `B` equal-width bins and concatenating the per-dimension
//! histograms into one vector over `n_dims * B` cells, normalized jointly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A table of numeric feature vectors with optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    id: String,
    n_dims: usize,
    features: Vec<f64>,
    labels: Option<Vec<i64>>,
}

impl Dataset {
    /// Builds a dataset from a row-major feature buffer.
    pub fn new(
        id: impl Into<String>,
        n_dims: usize,
        features: Vec<f64>,
        labels: Option<Vec<i64>>,
    ) -> Result<Self> {
        if n_dims == 0 {
            return Err(Error::InvalidDataset("n_dims must be at least 1".into()));
        }
        if features.is_empty() {
            return Err(Error::InvalidDataset("dataset has no rows".into()));
        }
        if features.len() % n_dims != 0 {
            return Err(Error::InvalidDataset(format!(
                "{} values do not fill rows of width {}",
                features.len(),
                n_dims
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value at row {}, dim {}",
                i / n_dims,
                i % n_dims
            )));
        }
        let n_rows = features.len() / n_dims;
        if let Some(labels) = &labels {
            if labels.len() != n_rows {
                return Err(Error::InvalidDataset(format!(
                    "{} labels for {} rows",
                    labels.len(),
                    n_rows
                )));
            }
        }
        Ok(Dataset {
            id: id.into(),
            n_dims,
            features,
            labels,
        })
    }

    pub fn from_rows(
        id: impl Into<String>,
        rows: &[Vec<f64>],
        labels: Option<Vec<i64>>,
    ) -> Result<Self> {
        let n_dims = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().position(|r| r.len() != n_dims) {
            return Err(Error::InvalidDataset(format!(
                "row {} has {} values, expected {}",
                bad,
                rows[bad].len(),
                n_dims
            )));
        }
        Dataset::new(id, n_dims, rows.concat(), labels)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn n_rows(&self) -> usize {
        self.features.len() / self.n_dims
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_dims..(i + 1) * self.n_dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_dims)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    /// Per-dimension mean.
    pub fn center(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.n_dims];
        for row in self.rows() {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
        }
        let n = self.n_rows() as f64;
        sum.into_iter().map(|s| s / n).collect()
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select(&self, id: impl Into<String>, rows: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(rows.len() * self.n_dims);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r]).collect());
        Dataset::new(id, self.n_dims, features, labels)
    }

    /// Concatenates datasets with equal width. Labels survive only if every
    /// part carries them.
    pub fn concat(id: impl Into<String>, parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidDataset("nothing to concatenate".into()))?;
        let mut features = Vec::new();
        let mut labels = Some(Vec::new());
        for p in parts {
            if p.n_dims != first.n_dims {
                return Err(Error::DimensionMismatch {
                    expected: first.n_dims,
                    found: p.n_dims,
                });
            }
            features.extend_from_slice(&p.features);
            labels = match (labels, &p.labels) {
                (Some(mut acc), Some(l)) => {
                    acc.extend_from_slice(l);
                    Some(acc)
                }
                _ => None,
            };
        }
        Dataset::new(id, first.n_dims, features, labels)
    }
}

/// Loads a CSV file with a header row. Every column except `label_column`
/// becomes a feature dimension.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, label_column).map(|d| d.with_id(id))
}

fn read_csv<R: std::io::Read>(
    reader: R,
    path: &Path,
    label_column: Option<&str>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |row: usize, column: &str, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(0, "<header>", e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let label_idx = match label_column {
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            }
        })?),
        None => None,
    };
    let n_dims = headers.len() - usize::from(label_idx.is_some());
    if n_dims == 0 {
        return Err(Error::InvalidDataset(format!(
            "{} has no feature columns",
            path.display()
        )));
    }

    let mut features = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, "<record>", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                row,
                "<record>",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_idx {
                let label: i64 = cell.parse().map_err(|_| {
                    parse_err(row, &headers[j], format!("label {cell:?} is not an integer"))
                })?;
                if let Some(l) = labels.as_mut() {
                    l.push(label);
                }
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, &headers[j], format!("{cell:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(row, &headers[j], format!("{cell:?} is not finite")));
            }
            features.push(v);
        }
    }
    if features.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Dataset::new("dataset", n_dims, features, labels)
}

/// Writes features (and labels, if present) as CSV with `f0..fN[,label]` headers.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header: Vec<String> = (0..dataset.n_dims()).map(|d| format!("f{d}")).collect();
    if dataset.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for (i, row) in dataset.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = dataset.labels() {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Equal-width binning over fixed per-dimension ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningScheme {
    bins_per_dim: usize,
    ranges: Vec<(f64, f64)>,
}

impl BinningScheme {
    pub fn new(bins_per_dim: usize, ranges: Vec<(f64, f64)>) -> Result<Self> {
        if bins_per_dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "bins_per_dim must be at least 2, got {bins_per_dim}"
            )));
        }
        if ranges.is_empty() {
            return Err(Error::InvalidParameter("binning needs at least one dimension".into()));
        }
        let ranges = ranges
            .into_iter()
            .enumerate()
            .map(|(d, (lo, hi))| {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    Err(Error::InvalidParameter(format!("bad range ({lo}, {hi}) for dim {d}")))
                } else {
                    Ok(widen(lo, hi))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BinningScheme {
            bins_per_dim,
            ranges,
        })
    }

    pub fn bins_per_dim(&self) -> usize {
        self.bins_per_dim
    }

    pub fn n_dims(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    /// Size of the sample space, `n_dims * bins_per_dim`.
    pub fn omega_size(&self) -> usize {
        self.ranges.len() * self.bins_per_dim
    }

    #[inline]
    fn bin(&self, dim: usize, v: f64) -> usize {
        let (lo, hi) = self.ranges[dim];
        let pos = ((v - lo) / (hi - lo) * self.bins_per_dim as f64).floor();
        if pos <= 0.0 {
            0
        } else {
            (pos as usize).min(self.bins_per_dim - 1)
        }
    }
}

/// Constant columns get a range of `v ± 1e-6 * max(1, |v|)`.
fn widen(lo: f64, hi: f64) -> (f64, f64) {
    if lo < hi {
        (lo, hi)
    } else {
        let eps = 1e-6 * lo.abs().max(1.0);
        (lo - eps, hi + eps)
    }
}

/// Fits per-dimension ranges to the global min/max over all datasets.
pub fn fit_binning(datasets: &[&Dataset], bins_per_dim: usize) -> Result<BinningScheme> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::InvalidParameter("fit_binning needs at least one dataset".into()))?;
    let n_dims = first.n_dims();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); n_dims];
    for ds in datasets {
        if ds.n_dims() != n_dims {
            return Err(Error::DimensionMismatch {
                expected: n_dims,
                found: ds.n_dims(),
            });
        }
        for row in ds.rows() {
            for (r, &v) in ranges.iter_mut().zip(row) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
    }
    BinningScheme::new(bins_per_dim, ranges)
}

/// A normalized histogram over a fixed sample space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbDistribution {
    weights: Vec<f64>,
}

impl ProbDistribution {
    /// Validates non-negativity and unit mass (within 1e-9).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("empty distribution".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        Ok(ProbDistribution { weights })
    }

    /// Normalizes non-negative counts.
    pub fn from_counts(counts: &[f64]) -> Result<Self> {
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("counts sum to zero".into()));
        }
        ProbDistribution::new(counts.iter().map(|c| c / total).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn omega_size(&self) -> usize {
        self.weights.len()
    }
}

/// Histogram of the whole dataset. Out-of-range values land in the edge bins.
pub fn to_distribution(data: &Dataset, scheme: &BinningScheme) -> Result<ProbDistribution> {
    rows_to_distribution(data, 0..data.n_rows(), scheme)
}

/// Histogram of a subset of rows.
pub fn rows_to_distribution(
    data: &Dataset,
    rows: impl IntoIterator<Item = usize>,
    scheme: &BinningScheme,
) -> Result<ProbDistribution> {
    if data.n_dims() != scheme.n_dims() {
        return Err(Error::DimensionMismatch {
            expected: scheme.n_dims(),
            found: data.n_dims(),
        });
    }
    let b = scheme.bins_per_dim();
    let mut counts = vec![0u64; scheme.omega_size()];
    let mut n = 0u64;
    for r in rows {
        for (d, &v) in data.row(r).iter().enumerate() {
            counts[d * b + scheme.bin(d, v)] += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidParameter("empty row subset".into()));
    }
    let total = (n * data.n_dims() as u64) as f64;
    Ok(ProbDistribution {
        weights: counts.into_iter().map(|c| c as f64 / total).collect(),
    })
}
