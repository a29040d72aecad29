use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bench::{BenchConfig, BenchScenario, GroundTruth, StrategyKind};
use crate::adaptivity::IndexConfig;
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::strategies::{ModelEntry, NearestCentroid, Registry};

/// Isotropic Gaussian clusters, one per class.
#[derive(Debug, Clone)]
pub struct GaussianClasses {
    means: Vec<Vec<f64>>,
    spread: f64,
}

impl GaussianClasses {
    /// Class means drawn uniformly from `[-separation, separation]^n_dims`.
    pub fn new(n_classes: usize, n_dims: usize, separation: f64, spread: f64, seed: u64) -> Result<Self> {
        if n_classes == 0 || n_dims == 0 || !(spread > 0.0) || !(separation >= 0.0) {
            return Err(Error::InvalidParameter(
                "need classes, dims, a positive spread and a non-negative separation".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "class-means"));
        let means = (0..n_classes)
            .map(|_| {
                (0..n_dims)
                    .map(|_| rng.random_range(-separation..=separation))
                    .collect()
            })
            .collect();
        Ok(GaussianClasses { means, spread })
    }

    pub fn n_classes(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// Labeled sample with `counts[c]` rows of class `c`, rows shuffled.
    pub fn sample(&self, id: impl Into<String>, counts: &[usize], seed: u64) -> Result<Dataset> {
        if counts.len() != self.means.len() {
            return Err(Error::InvalidParameter(format!(
                "{} class counts for {} classes",
                counts.len(),
                self.means.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.spread).expect("spread checked positive");
        let mut order: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        order.shuffle(&mut rng);
        let dims = self.means[0].len();
        let mut features = Vec::with_capacity(order.len() * dims);
        for &c in &order {
            features.extend(self.means[c].iter().map(|m| m + noise.sample(&mut rng)));
        }
        Dataset::new(id, dims, features, Some(order.into_iter().map(|c| c as i64).collect()))
    }
}

/// Extra rows of one class added to one variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewSpec {
    pub variant: usize,
    pub class: i64,
    /// Extra rows as a multiple of the per-class row count.
    pub extra_fraction: f64,
}

/// Variant 0 is a balanced subsample of `base` with `rows_per_class` rows of
/// every class. Every other variant is its own balanced subsample plus the
/// extra rows its skews ask for, taken from rows of that class not already
/// in the variant (with replacement once those run out).
pub fn make_skewed_corpus(
    base: &Dataset,
    n_variants: usize,
    rows_per_class: usize,
    skews: &[SkewSpec],
    seed: u64,
) -> Result<Vec<Dataset>> {
    let labels = base
        .labels()
        .ok_or_else(|| Error::InvalidDataset(format!("{} has no labels", base.id())))?;
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    for s in skews {
        if !by_class.contains_key(&s.class) {
            return Err(Error::InvalidParameter(format!(
                "class {} does not occur in {}",
                s.class,
                base.id()
            )));
        }
        if s.variant == 0 || s.variant >= n_variants {
            return Err(Error::InvalidParameter(format!(
                "skew targets variant {}, expected 1..{n_variants}",
                s.variant
            )));
        }
        if !(s.extra_fraction >= 0.0) {
            return Err(Error::InvalidParameter("extra_fraction must be non-negative".into()));
        }
    }
    if let Some((class, rows)) = by_class.iter().find(|(_, r)| r.len() < rows_per_class) {
        return Err(Error::InvalidDataset(format!(
            "class {class} has {} rows, {rows_per_class} needed",
            rows.len()
        )));
    }

    (0..n_variants)
        .map(|v| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("variant-{v}")));
            let mut picked = Vec::new();
            for (class, rows) in &by_class {
                let mut pool = rows.clone();
                pool.shuffle(&mut rng);
                picked.extend_from_slice(&pool[..rows_per_class]);
                let extra: usize = skews
                    .iter()
                    .filter(|s| s.variant == v && s.class == *class)
                    .map(|s| (s.extra_fraction * rows_per_class as f64).round() as usize)
                    .sum();
                let fresh = extra.min(pool.len() - rows_per_class);
                picked.extend_from_slice(&pool[rows_per_class..rows_per_class + fresh]);
                for _ in fresh..extra {
                    picked.push(rows[rng.random_range(0..rows.len())]);
                }
            }
            base.select(format!("variant-{v}"), &picked)
        })
        .collect()
}

/// Classifier used as the ground truth of a synthetic benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundTruthModel {
    NearestCentroid,
    /// Nearest centroid shifted by training class frequencies.
    #[default]
    PriorCentroid,
}

impl GroundTruthModel {
    pub fn fit(self, data: &Dataset) -> Result<NearestCentroid> {
        match self {
            GroundTruthModel::NearestCentroid => NearestCentroid::fit(data),
            GroundTruthModel::PriorCentroid => NearestCentroid::fit_with_priors(data),
        }
    }
}

/// A complete synthetic benchmark: one model per variant, one scenario per
/// variant whose target is a fresh sample with that variant's class mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkewBenchSpec {
    pub seed: u64,
    pub n_classes: usize,
    pub n_dims: usize,
    pub separation: f64,
    pub spread: f64,
    /// Rows per class in the pool variants are drawn from.
    pub pool_rows_per_class: usize,
    pub rows_per_class: usize,
    pub target_rows_per_class: usize,
    pub n_variants: usize,
    pub skews: Vec<SkewSpec>,
    pub ground_truth: GroundTruthModel,
    pub bins_per_dim: usize,
    pub t_prime: f64,
    pub repetitions: usize,
    pub index: IndexConfig,
    pub strategies: Vec<StrategyKind>,
}

impl Default for SkewBenchSpec {
    fn default() -> Self {
        let skew = |variant, class, extra_fraction| SkewSpec {
            variant,
            class,
            extra_fraction,
        };
        SkewBenchSpec {
            seed: 7,
            n_classes: 10,
            n_dims: 8,
            separation: 1.5,
            spread: 1.0,
            pool_rows_per_class: 4500,
            rows_per_class: 400,
            target_rows_per_class: 200,
            n_variants: 5,
            skews: vec![
                skew(1, 3, 10.0),
                skew(2, 1, 10.0),
                skew(3, 7, 10.0),
                skew(4, 3, 10.0),
                skew(4, 7, 10.0),
            ],
            ground_truth: GroundTruthModel::default(),
            bins_per_dim: 10,
            t_prime: 0.5,
            repetitions: 5,
            // partitions of 55 rows are too noisy to tell these mixtures
            // apart; 400-row partitions and a tight threshold can
            index: IndexConfig {
                partition_size: 400,
                js_threshold: 0.008,
                bucket_width: 0.5,
                ..IndexConfig::default()
            },
            strategies: StrategyKind::ALL.to_vec(),
        }
    }
}

impl SkewBenchSpec {
    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            bins_per_dim: self.bins_per_dim,
            index: self.index.clone(),
            t_prime: self.t_prime,
            repetitions: self.repetitions,
        }
    }

    /// Model id of a variant.
    pub fn model_id(variant: usize) -> String {
        if variant == 0 {
            "balanced".to_string()
        } else {
            format!("skewed-{variant}")
        }
    }
}

/// Builds the models and scenarios a [`SkewBenchSpec`] describes.
pub fn build_skew_scenarios(spec: &SkewBenchSpec) -> Result<Vec<BenchScenario>> {
    if spec.n_variants == 0 {
        return Err(Error::InvalidParameter("need at least one variant".into()));
    }
    let classes = GaussianClasses::new(spec.n_classes, spec.n_dims, spec.separation, spec.spread, spec.seed)?;
    let pool = classes.sample(
        "pool",
        &vec![spec.pool_rows_per_class; spec.n_classes],
        derive_seed(spec.seed, "pool"),
    )?;
    let variants = make_skewed_corpus(&pool, spec.n_variants, spec.rows_per_class, &spec.skews, spec.seed)?;

    let mut entries = Vec::new();
    for (v, data) in variants.into_iter().enumerate() {
        let id = SkewBenchSpec::model_id(v);
        let model = spec.ground_truth.fit(&data)?;
        let accuracy = model.accuracy(&data)?;
        entries.push(
            ModelEntry::new(id.clone())
                .with_data(data.with_id(id))
                .with_source_accuracy(accuracy)
                .with_predictor(Arc::new(model)),
        );
    }
    let registry = Registry::from_entries(entries)?;

    (0..spec.n_variants)
        .map(|v| {
            let mut counts = vec![spec.target_rows_per_class; spec.n_classes];
            for s in spec.skews.iter().filter(|s| s.variant == v) {
                counts[s.class as usize] +=
                    (s.extra_fraction * spec.target_rows_per_class as f64).round() as usize;
            }
            let id = format!("target-{}", SkewBenchSpec::model_id(v));
            let target = classes.sample(&id, &counts, derive_seed(spec.seed, &id))?;
            let accuracies = registry
                .entries()
                .iter()
                .map(|e| {
                    let p = e.predictor.as_ref().expect("every synthetic model has a predictor");
                    let predicted = p.predict(&target)?;
                    let truth = target.labels().expect("synthetic targets are labeled");
                    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
                    Ok((e.id.clone(), hits as f64 / truth.len() as f64))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            let features = Dataset::new(id.clone(), target.n_dims(), target.features().to_vec(), None)?;
            BenchScenario::new(id, registry.clone(), features, GroundTruth::Accuracies(accuracies))
        })
        .collect()
}
