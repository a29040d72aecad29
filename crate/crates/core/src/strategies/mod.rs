//! Model-selection strategies as uniform rankers over a registry.

mod predictors;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use predictors::{FilePredictions, NearestCentroid, PredictionProvider};

use crate::adaptivity::{adaptivity_from_distributions, partition, IndexConfig, TwoLevelIndex};
use crate::dataio::{to_distribution, BinningScheme, Dataset};
use crate::error::{Error, Result};
use crate::jsdlsh::{collision_estimate, JsdLshFamily, JsdSignature};
use crate::metrics::{center_distance, js_divergence};

/// Precomputed summaries kept in place of raw training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSignatures {
    /// Per-dimension mean of the training data.
    pub center: Vec<f64>,
    /// JSD-LSH signature of the whole training set.
    pub dataset: Option<JsdSignature>,
    /// One JSD-LSH signature per training partition.
    pub partitions: Vec<JsdSignature>,
}

/// A candidate model.
#[derive(Clone)]
pub struct ModelEntry {
    pub id: String,
    pub training_data: Option<Arc<Dataset>>,
    pub source_accuracy: Option<f64>,
    pub predictor: Option<Arc<dyn PredictionProvider>>,
    pub signatures: Option<StoredSignatures>,
}

impl fmt::Debug for ModelEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelEntry")
            .field("id", &self.id)
            .field("training_rows", &self.training_data.as_ref().map(|d| d.n_rows()))
            .field("source_accuracy", &self.source_accuracy)
            .field("predictor", &self.predictor.is_some())
            .field("signatures", &self.signatures.is_some())
            .finish()
    }
}

impl ModelEntry {
    pub fn new(id: impl Into<String>) -> Self {
        ModelEntry {
            id: id.into(),
            training_data: None,
            source_accuracy: None,
            predictor: None,
            signatures: None,
        }
    }

    pub fn with_data(mut self, data: impl Into<Arc<Dataset>>) -> Self {
        self.training_data = Some(data.into());
        self
    }

    pub fn with_source_accuracy(mut self, accuracy: f64) -> Self {
        self.source_accuracy = Some(accuracy);
        self
    }

    pub fn with_predictor(mut self, predictor: Arc<dyn PredictionProvider>) -> Self {
        self.predictor = Some(predictor);
        self
    }

    pub fn with_signatures(mut self, signatures: StoredSignatures) -> Self {
        self.signatures = Some(signatures);
        self
    }

    fn n_dims(&self) -> Option<usize> {
        self.training_data
            .as_ref()
            .map(|d| d.n_dims())
            .or_else(|| self.signatures.as_ref().map(|s| s.center.len()))
    }

    fn center(&self) -> Result<Vec<f64>> {
        if let Some(data) = &self.training_data {
            return Ok(data.center());
        }
        self.signatures
            .as_ref()
            .map(|s| s.center.clone())
            .ok_or_else(|| self.missing("training data or a stored center"))
    }

    fn data(&self) -> Result<&Dataset> {
        self.training_data
            .as_deref()
            .ok_or_else(|| self.missing("training data"))
    }

    fn missing(&self, what: &'static str) -> Error {
        Error::MissingRepresentation {
            id: self.id.clone(),
            what,
        }
    }
}

/// Candidate models with unique ids and a common feature width.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: Vec<ModelEntry>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ModelEntry>) -> Result<Self> {
        let mut reg = Registry::new();
        for e in entries {
            reg.insert(e)?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, entry: ModelEntry) -> Result<()> {
        if self.get(&entry.id).is_some() {
            return Err(Error::DuplicateModel(entry.id));
        }
        if let (Some(expected), Some(found)) = (self.n_dims(), entry.n_dims()) {
            if expected != found {
                return Err(Error::DimensionMismatch { expected, found });
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ModelEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn entries(&self) -> &[ModelEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_dims(&self) -> Option<usize> {
        self.entries.iter().find_map(ModelEntry::n_dims)
    }

    /// Training datasets of every model that has one.
    pub fn datasets(&self) -> Vec<&Dataset> {
        self.entries
            .iter()
            .filter_map(|e| e.training_data.as_deref())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub id: String,
    pub score: f64,
}

/// Models ordered best first; ties broken by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub strategy: String,
    pub orientation: Orientation,
    pub entries: Vec<RankedModel>,
}

impl Ranking {
    pub fn new(
        strategy: impl Into<String>,
        orientation: Orientation,
        scores: impl IntoIterator<Item = (String, f64)>,
    ) -> Self {
        let mut entries: Vec<RankedModel> = scores
            .into_iter()
            .map(|(id, score)| RankedModel { id, score })
            .collect();
        entries.sort_by(|a, b| {
            let ord = match orientation {
                Orientation::HigherBetter => b.score.total_cmp(&a.score),
                Orientation::LowerBetter => a.score.total_cmp(&b.score),
            };
            ord.then_with(|| a.id.cmp(&b.id))
        });
        Ranking {
            strategy: strategy.into(),
            orientation,
            entries,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn score(&self, id: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.score)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The first `k` ids of a ranking.
pub fn top_k(ranking: &Ranking, k: usize) -> Result<Vec<String>> {
    if k == 0 || k > ranking.len() {
        return Err(Error::InvalidParameter(format!(
            "k={k} outside 1..={}",
            ranking.len()
        )));
    }
    Ok(ranking.entries[..k].iter().map(|e| e.id.clone()).collect())
}

fn require_models(registry: &Registry) -> Result<()> {
    if registry.is_empty() {
        return Err(Error::InvalidParameter("registry has no models".into()));
    }
    Ok(())
}

/// How JS divergence is obtained.
#[derive(Debug, Clone, Copy)]
pub enum JsMode<'a> {
    /// Histogram both datasets and evaluate the divergence directly.
    Exact { binning: &'a BinningScheme },
    /// Score `1 - collision_estimate` of whole-dataset JSD-LSH signatures.
    Lsh {
        binning: &'a BinningScheme,
        family: &'a JsdLshFamily,
    },
}

/// Ranks by JS divergence to the target (lower is better).
pub fn rank_by_js(registry: &Registry, target: &Dataset, mode: JsMode<'_>) -> Result<Ranking> {
    require_models(registry)?;
    match mode {
        JsMode::Exact { binning } => {
            let q = to_distribution(target, binning)?;
            let scores = registry
                .entries()
                .iter()
                .map(|e| {
                    let p = to_distribution(e.data()?, binning)?;
                    Ok((e.id.clone(), js_divergence(&p, &q)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Ranking::new("js", Orientation::LowerBetter, scores))
        }
        JsMode::Lsh { binning, family } => {
            let q = family.hash_distribution(&to_distribution(target, binning)?)?;
            let scores = registry
                .entries()
                .iter()
                .map(|e| {
                    let sig = match e.signatures.as_ref().and_then(|s| s.dataset.clone()) {
                        Some(sig) => sig,
                        None => family.hash_distribution(&to_distribution(e.data()?, binning)?)?,
                    };
                    Ok((e.id.clone(), 1.0 - collision_estimate(&sig, &q)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Ranking::new("js-lsh", Orientation::LowerBetter, scores))
        }
    }
}

/// Ranks by distance between dataset centers (lower is better).
pub fn rank_by_l2(registry: &Registry, target: &Dataset) -> Result<Ranking> {
    require_models(registry)?;
    let tc = target.center();
    let scores = registry
        .entries()
        .iter()
        .map(|e| Ok((e.id.clone(), center_distance(&e.center()?, &tc)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ranking::new("l2", Orientation::LowerBetter, scores))
}

/// How adaptivity is obtained.
#[derive(Debug, Clone, Copy)]
pub enum AdaptivityMode<'a> {
    /// Exact partition-by-partition comparison.
    Pairwise {
        binning: &'a BinningScheme,
        partition_size: usize,
        js_threshold: f64,
        shuffle_seed: u64,
    },
    /// Band-match fractions from the two-level index.
    Index {
        index: &'a TwoLevelIndex,
        t_prime: f64,
    },
}

impl<'a> AdaptivityMode<'a> {
    /// Pairwise mode with the partitioning an index built from `config` uses.
    pub fn pairwise(config: &IndexConfig, binning: &'a BinningScheme) -> Self {
        AdaptivityMode::Pairwise {
            binning,
            partition_size: config.partition_size,
            js_threshold: config.js_threshold,
            shuffle_seed: config.seeds().shuffle,
        }
    }
}

/// Ranks by adaptivity to the target (higher is better).
pub fn rank_by_adaptivity(
    registry: &Registry,
    target: &Dataset,
    mode: AdaptivityMode<'_>,
) -> Result<Ranking> {
    require_models(registry)?;
    match mode {
        AdaptivityMode::Pairwise {
            binning,
            partition_size,
            js_threshold,
            shuffle_seed,
        } => {
            let target_dists =
                partition(target, partition_size, shuffle_seed)?.distributions(target, binning)?;
            let scores = registry
                .entries()
                .iter()
                .map(|e| {
                    let data = e.data()?;
                    let source = partition(data, partition_size, shuffle_seed)?
                        .distributions(data, binning)?;
                    let a = adaptivity_from_distributions(&source, &target_dists, js_threshold)?;
                    Ok((e.id.clone(), a))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Ranking::new("adaptivity", Orientation::HigherBetter, scores))
        }
        AdaptivityMode::Index { index, t_prime } => {
            let result = index.query(target, t_prime)?;
            let scores = registry
                .entries()
                .iter()
                .map(|e| {
                    if !index.models().contains_key(&e.id) {
                        return Err(e.missing("an entry in the two-level index"));
                    }
                    Ok((e.id.clone(), result.fractions.get(&e.id).copied().unwrap_or(0.0)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Ranking::new("adaptivity-index", Orientation::HigherBetter, scores))
        }
    }
}

/// Majority voting: per target row, every model that predicts a most-voted
/// label earns one credit. Score is credits per row (higher is better).
pub fn rank_by_voting(registry: &Registry, target: &Dataset) -> Result<Ranking> {
    require_models(registry)?;
    let n = target.n_rows();
    let predictions: Vec<Vec<i64>> = registry
        .entries()
        .par_iter()
        .map(|e| {
            let p = e
                .predictor
                .as_ref()
                .ok_or_else(|| e.missing("a predictor"))?;
            let labels = p.predict(target).map_err(|err| Error::Prediction {
                id: e.id.clone(),
                message: err.to_string(),
            })?;
            if labels.len() != n {
                return Err(Error::Prediction {
                    id: e.id.clone(),
                    message: format!("{} predictions for {n} rows", labels.len()),
                });
            }
            if let Some(allowed) = p.label_set() {
                if let Some(bad) = labels.iter().find(|l| !allowed.contains(l)) {
                    return Err(Error::Prediction {
                        id: e.id.clone(),
                        message: format!("label {bad} is not in the declared label set"),
                    });
                }
            }
            Ok(labels)
        })
        .collect::<Result<_>>()?;

    let mut credits = vec![0usize; predictions.len()];
    let mut votes: BTreeMap<i64, usize> = BTreeMap::new();
    for row in 0..n {
        votes.clear();
        for p in &predictions {
            *votes.entry(p[row]).or_default() += 1;
        }
        let top = votes.values().copied().max().unwrap_or(0);
        let winners: BTreeSet<i64> = votes
            .iter()
            .filter(|(_, &c)| c == top)
            .map(|(&l, _)| l)
            .collect();
        for (c, p) in credits.iter_mut().zip(&predictions) {
            if winners.contains(&p[row]) {
                *c += 1;
            }
        }
    }
    let scores = registry
        .entries()
        .iter()
        .zip(credits)
        .map(|(e, c)| (e.id.clone(), c as f64 / n as f64));
    Ok(Ranking::new("voting", Orientation::HigherBetter, scores))
}

/// Ranks by accuracy on the model's own training data. Never looks at a
/// target.
pub fn rank_by_source_accuracy(registry: &Registry) -> Result<Ranking> {
    require_models(registry)?;
    let scores = registry
        .entries()
        .iter()
        .map(|e| {
            e.source_accuracy
                .map(|a| (e.id.clone(), a))
                .ok_or_else(|| e.missing("a source accuracy"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ranking::new("source-accuracy", Orientation::HigherBetter, scores))
}
