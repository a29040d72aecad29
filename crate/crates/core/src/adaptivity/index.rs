//! Two-level LSH index: JSD-LSH signatures per partition at the bottom,
//! Minwise LSH over the flattened band tokens at the top.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::flatten::{flatten, padding_namespace};
use super::{minwise_threshold, partition};
use crate::dataio::{BinningScheme, Dataset};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::jsdlsh::{
    threshold_to_collision, JsdFamilyManifest, JsdLshFamily, JsdSignature, DEFAULT_BANDS,
    DEFAULT_BUCKET_WIDTH, DEFAULT_HASHES,
};
use crate::minhash::{
    MinHashFamily, MinHashManifest, MinSignature, DEFAULT_MINWISE_BANDS, DEFAULT_MINWISE_HASHES,
};

pub const INDEX_FORMAT_VERSION: u32 = 1;

/// A count that is either fixed or derived at build time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AutoOr {
    Auto,
    Fixed(usize),
}

/// Number of JSD-LSH bands: fixed, or `round(1 / g(t))`.
pub type BandSetting = AutoOr;
/// Padding bound `n_u`: fixed, or the largest partition count in the corpus.
pub type PaddingBound = AutoOr;

impl fmt::Display for AutoOr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutoOr::Auto => f.write_str("auto"),
            AutoOr::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for AutoOr {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(AutoOr::Auto);
        }
        s.parse()
            .map(AutoOr::Fixed)
            .map_err(|_| format!("expected \"auto\" or a positive integer, got {s:?}"))
    }
}

impl Serialize for AutoOr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AutoOr::Auto => s.serialize_str("auto"),
            AutoOr::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for AutoOr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(AutoOr::Fixed(n)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Build-time hyperparameters of the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    /// Rows per partition.
    pub partition_size: usize,
    /// JS-divergence threshold under which two partitions are "the same".
    pub js_threshold: f64,
    pub bucket_width: f64,
    pub jsd_hashes: usize,
    pub jsd_bands: BandSetting,
    pub minwise_hashes: usize,
    pub minwise_bands: usize,
    pub padding: PaddingBound,
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            partition_size: 55,
            js_threshold: 0.1,
            bucket_width: DEFAULT_BUCKET_WIDTH,
            jsd_hashes: DEFAULT_HASHES,
            jsd_bands: AutoOr::Fixed(DEFAULT_BANDS),
            minwise_hashes: DEFAULT_MINWISE_HASHES,
            minwise_bands: DEFAULT_MINWISE_BANDS,
            padding: AutoOr::Auto,
            seed: 42,
        }
    }
}

/// Seeds fanned out from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub master: u64,
    pub shuffle: u64,
    pub jsd: u64,
    pub minwise: u64,
    pub padding: u64,
}

impl SeedPlan {
    pub fn from_master(master: u64) -> Self {
        SeedPlan {
            master,
            shuffle: derive_seed(master, "partition-shuffle"),
            jsd: derive_seed(master, "jsd-family"),
            minwise: derive_seed(master, "minwise-family"),
            padding: derive_seed(master, "padding"),
        }
    }
}

impl IndexConfig {
    pub fn seeds(&self) -> SeedPlan {
        SeedPlan::from_master(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.partition_size == 0 {
            return Err(Error::InvalidParameter("partition size must be at least 1".into()));
        }
        if !(self.js_threshold > 0.0 && self.js_threshold < std::f64::consts::LN_2) {
            return Err(Error::InvalidParameter(format!(
                "JS threshold {} outside (0, ln 2)",
                self.js_threshold
            )));
        }
        if let AutoOr::Fixed(0) = self.padding {
            return Err(Error::InvalidParameter("padding bound must be positive".into()));
        }
        Ok(())
    }

    /// Resolves the band count and reports a warning when `1/L` is far from
    /// `g(t)`.
    pub fn resolve_bands(&self) -> Result<(usize, Option<String>)> {
        let g = threshold_to_collision(self.js_threshold, self.bucket_width)?;
        let bands = match self.jsd_bands {
            AutoOr::Fixed(l) => l,
            AutoOr::Auto => nearest_divisor(self.jsd_hashes, (1.0 / g).round().max(1.0) as usize),
        };
        if bands == 0 || self.jsd_hashes % bands != 0 {
            return Err(Error::InvalidParameter(format!(
                "K={} must be a positive multiple of L={bands}",
                self.jsd_hashes
            )));
        }
        let rel = (1.0 / bands as f64 - g).abs() / g;
        let suggested = (1.0 / g).round().max(1.0) as usize;
        let warning = (rel > 0.25).then(|| {
            let far = format!(
                "1/L = {:.4} is far from g(t) = {:.4} (t = {}, r = {})",
                1.0 / bands as f64,
                g,
                self.js_threshold,
                self.bucket_width
            );
            if bands == suggested || matches!(self.jsd_bands, AutoOr::Auto) {
                format!("{far}; no L dividing K is closer")
            } else {
                format!("{far}; set L to auto for L = {suggested}")
            }
        });
        Ok((bands, warning))
    }

    /// Partition hasher for this config and binning.
    pub fn hasher(&self, binning: &BinningScheme) -> Result<PartitionHasher> {
        self.validate()?;
        let (bands, _) = self.resolve_bands()?;
        let seeds = self.seeds();
        Ok(PartitionHasher {
            family: JsdLshFamily::new(
                seeds.jsd,
                self.jsd_hashes,
                bands,
                self.bucket_width,
                binning.omega_size(),
            )?,
            binning: binning.clone(),
            partition_size: self.partition_size,
            shuffle_seed: seeds.shuffle,
        })
    }
}

fn nearest_divisor(k: usize, target: usize) -> usize {
    (1..=k)
        .filter(|d| k % d == 0)
        .min_by_key(|&d| (d.abs_diff(target), d))
        .unwrap_or(1)
}

/// Partitions a dataset and hashes every partition.
#[derive(Debug, Clone)]
pub struct PartitionHasher {
    family: JsdLshFamily,
    binning: BinningScheme,
    partition_size: usize,
    shuffle_seed: u64,
}

impl PartitionHasher {
    pub fn family(&self) -> &JsdLshFamily {
        &self.family
    }

    pub fn binning(&self) -> &BinningScheme {
        &self.binning
    }

    pub fn signatures(&self, data: &Dataset) -> Result<Vec<JsdSignature>> {
        if data.n_dims() != self.binning.n_dims() {
            return Err(Error::DimensionMismatch {
                expected: self.binning.n_dims(),
                found: data.n_dims(),
            });
        }
        partition(data, self.partition_size, self.shuffle_seed)?.signatures(
            data,
            &self.binning,
            &self.family,
        )
    }
}

/// What a model contributes to the index.
#[derive(Debug, Clone, Copy)]
pub enum ModelSource<'a> {
    Data(&'a Dataset),
    /// Partition signatures computed earlier with the same config and binning.
    Signatures(&'a [JsdSignature]),
}

#[derive(Debug, Clone, Copy)]
pub struct IndexInput<'a> {
    pub id: &'a str,
    pub source: ModelSource<'a>,
    pub source_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedModel {
    pub id: String,
    /// Partition count before padding.
    pub partitions: usize,
    pub signature: MinSignature,
    pub source_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TwoLevelIndex {
    config: IndexConfig,
    jsd_bands: usize,
    n_u: usize,
    seeds: SeedPlan,
    hasher: PartitionHasher,
    min_family: MinHashFamily,
    tables: Vec<HashMap<u64, BTreeSet<String>>>,
    /// `tables` with ids replaced by positions in `models`, for counting.
    slots: Vec<HashMap<u64, Vec<u32>>>,
    models: BTreeMap<String, IndexedModel>,
    warnings: Vec<String>,
    registry_hash: Option<String>,
}

/// Builds the index over a model corpus.
pub fn build_index(
    models: &[IndexInput<'_>],
    config: &IndexConfig,
    binning: &BinningScheme,
) -> Result<TwoLevelIndex> {
    let hasher = config.hasher(binning)?;
    let (jsd_bands, warning) = config.resolve_bands()?;
    if let Some(w) = &warning {
        log::debug!("{w}");
    }
    let seeds = config.seeds();

    let mut ids = BTreeSet::new();
    for m in models {
        if !ids.insert(m.id) {
            return Err(Error::DuplicateModel(m.id.to_string()));
        }
    }

    let partition_sigs: Vec<Vec<JsdSignature>> = models
        .par_iter()
        .map(|m| match m.source {
            ModelSource::Data(ds) => hasher.signatures(ds),
            ModelSource::Signatures(sigs) => {
                if sigs.is_empty() || sigs.iter().any(|s| s.len() != jsd_bands) {
                    return Err(Error::SignatureMismatch(format!(
                        "stored signatures of {:?} do not have {jsd_bands} bands",
                        m.id
                    )));
                }
                Ok(sigs.to_vec())
            }
        })
        .collect::<Result<_>>()?;

    let max_n = partition_sigs.iter().map(Vec::len).max().unwrap_or(1);
    let n_u = match config.padding {
        AutoOr::Auto => max_n,
        AutoOr::Fixed(n_u) => n_u,
    };
    for (m, sigs) in models.iter().zip(&partition_sigs) {
        if sigs.len() > n_u {
            return Err(Error::PaddingOverflow {
                id: m.id.to_string(),
                partitions: sigs.len(),
                n_u,
            });
        }
    }

    let min_family = MinHashFamily::new(seeds.minwise, config.minwise_hashes, config.minwise_bands)?;
    let min_sigs: Vec<MinSignature> = models
        .par_iter()
        .zip(&partition_sigs)
        .map(|(m, sigs)| {
            let tokens = flatten(sigs, n_u, padding_namespace(seeds.padding, m.id))?;
            min_family.minhash_set(&tokens)
        })
        .collect::<Result<_>>()?;

    let mut tables: Vec<HashMap<u64, BTreeSet<String>>> = vec![HashMap::new(); min_family.bands()];
    let mut indexed = BTreeMap::new();
    for ((m, sigs), sig) in models.iter().zip(&partition_sigs).zip(min_sigs) {
        for (table, &band) in tables.iter_mut().zip(sig.bands()) {
            table.entry(band).or_default().insert(m.id.to_string());
        }
        indexed.insert(
            m.id.to_string(),
            IndexedModel {
                id: m.id.to_string(),
                partitions: sigs.len(),
                signature: sig,
                source_accuracy: m.source_accuracy,
            },
        );
    }

    Ok(TwoLevelIndex {
        config: config.clone(),
        jsd_bands,
        n_u,
        seeds,
        hasher,
        min_family,
        slots: slot_tables(&tables, &indexed),
        tables,
        models: indexed,
        warnings: warning.into_iter().collect(),
        registry_hash: None,
    })
}

/// Outcome of a model-discovery query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    /// Target partition count.
    pub target_partitions: usize,
    /// `L * t' / (n_u/m + 1 - t')` as written; may exceed 1.
    pub raw_threshold: f64,
    /// `min(raw_threshold, (L_m - 1) / L_m)`.
    pub effective_threshold: f64,
    /// Models whose band-match fraction exceeds the effective threshold,
    /// best first.
    pub matched: Vec<String>,
    /// Band-match fraction of every candidate seen in any table.
    pub fractions: BTreeMap<String, f64>,
}

impl TwoLevelIndex {
    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn jsd_bands(&self) -> usize {
        self.jsd_bands
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn seeds(&self) -> SeedPlan {
        self.seeds
    }

    pub fn binning(&self) -> &BinningScheme {
        self.hasher.binning()
    }

    pub fn jsd_family(&self) -> &JsdLshFamily {
        self.hasher.family()
    }

    pub fn min_family(&self) -> &MinHashFamily {
        &self.min_family
    }

    pub fn hasher(&self) -> &PartitionHasher {
        &self.hasher
    }

    pub fn models(&self) -> &BTreeMap<String, IndexedModel> {
        &self.models
    }

    pub fn table(&self, band: usize) -> &HashMap<u64, BTreeSet<String>> {
        &self.tables[band]
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn registry_hash(&self) -> Option<&str> {
        self.registry_hash.as_deref()
    }

    pub fn set_registry_hash(&mut self, hash: Option<String>) {
        self.registry_hash = hash;
    }

    /// Finds models whose adaptivity to `target` is estimated to reach
    /// `t_prime`.
    pub fn query(&self, target: &Dataset, t_prime: f64) -> Result<QueryResult> {
        if !(t_prime > 0.0 && t_prime <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "adaptivity threshold {t_prime} outside (0, 1]"
            )));
        }
        let sigs = self.hasher.signatures(target)?;
        let m = sigs.len();
        let raw_threshold = minwise_threshold(self.jsd_bands, t_prime, self.n_u, m)?;
        let bands = self.min_family.bands();
        let cap = (bands - 1) as f64 / bands as f64;
        let effective_threshold = raw_threshold.min(cap);

        let tokens = flatten(&sigs, m, 0)?;
        let query_sig = self.min_family.minhash_set(&tokens)?;
        let mut counts = vec![0usize; self.models.len()];
        for (table, band) in self.slots.iter().zip(query_sig.bands()) {
            for &i in table.get(band).into_iter().flatten() {
                counts[i as usize] += 1;
            }
        }
        let fractions: BTreeMap<String, f64> = self
            .models
            .keys()
            .zip(counts)
            .filter(|(_, c)| *c > 0)
            .map(|(id, c)| (id.clone(), c as f64 / bands as f64))
            .collect();
        let mut matched: Vec<(&String, f64)> = fractions
            .iter()
            .filter(|(_, &f)| f > effective_threshold)
            .map(|(id, &f)| (id, f))
            .collect();
        matched.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(QueryResult {
            target_partitions: m,
            raw_threshold,
            effective_threshold,
            matched: matched.into_iter().map(|(id, _)| id.clone()).collect(),
            fractions,
        })
    }

    /// Writes `manifest.json`, `tables.jsonl` and `models.jsonl` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let manifest = Manifest {
            format_version: INDEX_FORMAT_VERSION,
            config: self.config.clone(),
            jsd_bands: self.jsd_bands,
            n_u: self.n_u,
            seeds: self.seeds,
            binning: self.binning().clone(),
            jsd_family: self.jsd_family().manifest(),
            minwise_family: self.min_family.manifest(),
            model_count: self.models.len(),
            models: self.models.keys().cloned().collect(),
            registry_hash: self.registry_hash.clone(),
            warnings: self.warnings.clone(),
        };
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

        let mut rows: Vec<TableRow> = Vec::new();
        for (band, table) in self.tables.iter().enumerate() {
            let mut entries: Vec<(&u64, &BTreeSet<String>)> = table.iter().collect();
            entries.sort_by_key(|(token, _)| **token);
            for (token, ids) in entries {
                for id in ids {
                    rows.push(TableRow {
                        band,
                        token: token.to_string(),
                        model: id.clone(),
                    });
                }
            }
        }
        write_jsonl(&dir.join("tables.jsonl"), &rows)?;
        let models: Vec<&IndexedModel> = self.models.values().collect();
        write_jsonl(&dir.join("models.jsonl"), &models)
    }

    /// Reads an index written by [`TwoLevelIndex::save`].
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format_version != INDEX_FORMAT_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported index format version {}",
                manifest.format_version
            )));
        }
        let family = JsdLshFamily::from_manifest(&manifest.jsd_family)?;
        let min_family = MinHashFamily::from_manifest(&manifest.minwise_family)?;

        let mut tables: Vec<HashMap<u64, BTreeSet<String>>> = vec![HashMap::new(); min_family.bands()];
        for row in read_jsonl::<TableRow>(&dir.join("tables.jsonl"))? {
            let token: u64 = row
                .token
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad token {:?}", row.token)))?;
            tables
                .get_mut(row.band)
                .ok_or_else(|| Error::InvalidParameter(format!("band {} out of range", row.band)))?
                .entry(token)
                .or_default()
                .insert(row.model);
        }
        let models: BTreeMap<String, IndexedModel> = read_jsonl::<IndexedModel>(&dir.join("models.jsonl"))?
            .into_iter()
            .map(|m| (m.id.clone(), m))
            .collect();
        for table in &tables {
            for ids in table.values() {
                if let Some(missing) = ids.iter().find(|id| !models.contains_key(*id)) {
                    return Err(Error::InvalidParameter(format!(
                        "table entry for unknown model {missing:?}"
                    )));
                }
            }
        }

        Ok(TwoLevelIndex {
            jsd_bands: manifest.jsd_bands,
            n_u: manifest.n_u,
            seeds: manifest.seeds,
            hasher: PartitionHasher {
                family,
                binning: manifest.binning,
                partition_size: manifest.config.partition_size,
                shuffle_seed: manifest.seeds.shuffle,
            },
            config: manifest.config,
            min_family,
            slots: slot_tables(&tables, &models),
            tables,
            models,
            warnings: manifest.warnings,
            registry_hash: manifest.registry_hash,
        })
    }
}

fn slot_tables(
    tables: &[HashMap<u64, BTreeSet<String>>],
    models: &BTreeMap<String, IndexedModel>,
) -> Vec<HashMap<u64, Vec<u32>>> {
    let position: HashMap<&str, u32> = models.keys().enumerate().map(|(i, id)| (id.as_str(), i as u32)).collect();
    tables
        .iter()
        .map(|table| {
            table
                .iter()
                .map(|(&token, ids)| (token, ids.iter().map(|id| position[id.as_str()]).collect()))
                .collect()
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: IndexConfig,
    jsd_bands: usize,
    n_u: usize,
    seeds: SeedPlan,
    binning: BinningScheme,
    jsd_family: JsdFamilyManifest,
    minwise_family: MinHashManifest,
    model_count: usize,
    models: Vec<String>,
    registry_hash: Option<String>,
    warnings: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    band: usize,
    token: String,
    model: String,
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
