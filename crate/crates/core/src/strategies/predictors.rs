use std::collections::BTreeSet;
use std::fmt::Debug;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::metrics::center_distance;

/// Anything that labels target rows.
pub trait PredictionProvider: Debug + Send + Sync {
    /// One label per row of `features`.
    fn predict(&self, features: &Dataset) -> Result<Vec<i64>>;

    /// Labels this provider may emit, when known.
    fn label_set(&self) -> Option<BTreeSet<i64>> {
        None
    }
}

/// Assigns each row the label of the closest class mean, optionally
/// shifted by class frequencies seen in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestCentroid {
    /// `(label, centroid)`, sorted by label.
    centroids: Vec<(i64, Vec<f64>)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    priors: Option<ClassPriors>,
}

/// Pooled per-feature variance and log class frequencies, aligned with the
/// centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassPriors {
    variance: f64,
    log_priors: Vec<f64>,
}

impl NearestCentroid {
    /// Plain nearest-mean classifier.
    pub fn fit(data: &Dataset) -> Result<Self> {
        Ok(NearestCentroid {
            centroids: Self::means(data)?.into_iter().map(|(l, c, _)| (l, c)).collect(),
            priors: None,
        })
    }

    /// Nearest mean under a shared isotropic Gaussian: a row goes to the
    /// class minimising `|x - mu|^2 / (2 var) - ln(freq)`. Models trained on
    /// class-skewed data lean toward their over-represented classes.
    pub fn fit_with_priors(data: &Dataset) -> Result<Self> {
        let means = Self::means(data)?;
        let labels = data.labels().expect("checked by means");
        let index: std::collections::BTreeMap<i64, usize> =
            means.iter().enumerate().map(|(i, (l, _, _))| (*l, i)).collect();
        let mut ss = 0.0;
        for (row, label) in data.rows().zip(labels) {
            let mu = &means[index[label]].1;
            ss += row.iter().zip(mu).map(|(x, m)| (x - m) * (x - m)).sum::<f64>();
        }
        let dof = (data.n_rows() * data.n_dims()).saturating_sub(means.len()).max(1);
        let variance = (ss / dof as f64).max(1e-12);
        let n = data.n_rows() as f64;
        let log_priors = means.iter().map(|(_, _, count)| (*count as f64 / n).ln()).collect();
        Ok(NearestCentroid {
            centroids: means.into_iter().map(|(l, c, _)| (l, c)).collect(),
            priors: Some(ClassPriors { variance, log_priors }),
        })
    }

    fn means(data: &Dataset) -> Result<Vec<(i64, Vec<f64>, usize)>> {
        let labels = data.labels().ok_or_else(|| {
            Error::InvalidDataset(format!("{} has no labels to fit a classifier", data.id()))
        })?;
        let mut sums: std::collections::BTreeMap<i64, (Vec<f64>, usize)> = Default::default();
        for (row, &label) in data.rows().zip(labels) {
            let (sum, count) = sums
                .entry(label)
                .or_insert_with(|| (vec![0.0; data.n_dims()], 0));
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            *count += 1;
        }
        Ok(sums
            .into_iter()
            .map(|(label, (sum, count))| {
                (label, sum.into_iter().map(|s| s / count as f64).collect(), count)
            })
            .collect())
    }

    pub fn centroids(&self) -> &[(i64, Vec<f64>)] {
        &self.centroids
    }

    /// Share of correctly labeled rows of a labeled dataset.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let truth = data
            .labels()
            .ok_or_else(|| Error::InvalidDataset(format!("{} has no labels", data.id())))?;
        let predicted = self.predict(data)?;
        let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
        Ok(hits as f64 / truth.len() as f64)
    }

    fn classify(&self, row: &[f64]) -> i64 {
        let mut best = (f64::INFINITY, i64::MIN);
        for (i, (label, c)) in self.centroids.iter().enumerate() {
            let mut d = center_distance(c, row).unwrap_or(f64::INFINITY);
            if let Some(p) = &self.priors {
                d = d * d / (2.0 * p.variance) - p.log_priors[i];
            }
            // strict: equal distances keep the smaller label
            if d < best.0 {
                best = (d, *label);
            }
        }
        best.1
    }
}

impl PredictionProvider for NearestCentroid {
    fn predict(&self, features: &Dataset) -> Result<Vec<i64>> {
        let width = self.centroids.first().map(|c| c.1.len()).unwrap_or(0);
        if features.n_dims() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: features.n_dims(),
            });
        }
        Ok(features.rows().map(|r| self.classify(r)).collect())
    }

    fn label_set(&self) -> Option<BTreeSet<i64>> {
        Some(self.centroids.iter().map(|(l, _)| *l).collect())
    }
}

/// Predictions computed elsewhere, one label per target row.
#[derive(Debug, Clone, PartialEq)]
pub struct FilePredictions {
    labels: Vec<i64>,
}

impl FilePredictions {
    pub fn from_labels(labels: Vec<i64>) -> Self {
        FilePredictions { labels }
    }

    /// Reads a `row_index,label` CSV. Every row index `0..n` must appear
    /// exactly once.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let parse_err = |row: usize, column: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            column: column.to_string(),
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
        let headers = rdr
            .headers()
            .map_err(|e| parse_err(0, "<header>", e.to_string()))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.to_string(),
                })
        };
        let (ri, li) = (col("row_index")?, col("label")?);
        let mut pairs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(i + 1, "<record>", e.to_string()))?;
            let idx: usize = rec[ri]
                .parse()
                .map_err(|_| parse_err(i + 1, "row_index", format!("{:?} is not an index", &rec[ri])))?;
            let label: i64 = rec[li]
                .parse()
                .map_err(|_| parse_err(i + 1, "label", format!("{:?} is not an integer", &rec[li])))?;
            pairs.push((idx, label));
        }
        if pairs.is_empty() {
            return Err(Error::EmptyFile {
                path: path.to_path_buf(),
            });
        }
        let mut labels = vec![None; pairs.len()];
        for (idx, label) in pairs {
            match labels.get_mut(idx) {
                Some(slot @ None) => *slot = Some(label),
                _ => {
                    return Err(Error::InvalidDataset(format!(
                        "{}: row_index {idx} is out of range or repeated",
                        path.display()
                    )))
                }
            }
        }
        Ok(FilePredictions {
            labels: labels.into_iter().map(|l| l.expect("all slots filled")).collect(),
        })
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }
}

impl PredictionProvider for FilePredictions {
    fn predict(&self, features: &Dataset) -> Result<Vec<i64>> {
        if features.n_rows() != self.labels.len() {
            return Err(Error::InvalidDataset(format!(
                "prediction file covers {} rows, target has {}",
                self.labels.len(),
                features.n_rows()
            )));
        }
        Ok(self.labels.clone())
    }
}
