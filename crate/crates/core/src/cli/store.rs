//! On-disk project layout.
//!
//! ```text
//! <root>/model-scout.json     optional project config
//! <root>/binning.json         frozen at the first registration
//! <root>/registry.jsonl       one record per model
//! <root>/datasets/<id>.csv    training data copies (absent for signatures-only models)
//! <root>/signatures/<id>.json center and JSD-LSH signatures
//! <root>/predictors/<id>.json fitted nearest-centroid predictors
//! <root>/index/               two-level index
//! <root>/reports/             query and benchmark output
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptivity::IndexConfig;
use crate::dataio::{fit_binning, load_csv, BinningScheme, Dataset};
use crate::strategies::{
    FilePredictions, ModelEntry, NearestCentroid, PredictionProvider, Registry, StoredSignatures,
};

pub const CONFIG_FILE: &str = "model-scout.json";
pub const SEED_ENV: &str = "MODEL_SCOUT_SEED";

/// Share of each fitted range added on both sides when the binning is
/// frozen, so later datasets are not all clamped into the edge bins.
const BINNING_MARGIN: f64 = 0.25;

/// Project-level defaults, overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub bins_per_dim: usize,
    pub t_prime: f64,
    pub index: IndexConfig,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            bins_per_dim: 10,
            t_prime: 0.5,
            index: IndexConfig::default(),
        }
    }
}

/// Hashing parameters a stored signature was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashingFingerprint {
    pub partition_size: usize,
    pub seed: u64,
    pub jsd_hashes: usize,
    pub jsd_bands: usize,
    pub bucket_width: f64,
}

impl HashingFingerprint {
    pub fn of(config: &IndexConfig) -> crate::Result<Self> {
        Ok(HashingFingerprint {
            partition_size: config.partition_size,
            seed: config.seed,
            jsd_hashes: config.jsd_hashes,
            jsd_bands: config.resolve_bands()?.0,
            bucket_width: config.bucket_width,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignatureFile {
    pub hashing: HashingFingerprint,
    pub signatures: StoredSignatures,
}

/// One line of `registry.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryRecord {
    pub id: String,
    pub n_rows: usize,
    pub n_dims: usize,
    pub source: String,
    pub source_accuracy: Option<f64>,
    /// Relative path of the stored training data copy.
    pub dataset: Option<String>,
    pub signatures: String,
    /// Relative path of a fitted predictor.
    pub predictor: Option<String>,
    /// Precomputed target predictions (`row_index,label`).
    pub predictions: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ProjectStore {
    root: PathBuf,
}

/// Held while the registry is being written; removes the lockfile on drop.
pub struct RegistryLock {
    path: PathBuf,
}

impl Drop for RegistryLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

impl ProjectStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(ProjectStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn index_dir(&self) -> PathBuf {
        self.path("index")
    }

    pub fn reports_dir(&self) -> Result<PathBuf> {
        let dir = self.path("reports");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    pub fn config(&self) -> Result<ProjectConfig> {
        let path = self.path(CONFIG_FILE);
        if !path.exists() {
            return Ok(ProjectConfig::default());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn lock(&self) -> Result<RegistryLock> {
        let path = self.path("registry.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RegistryLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "registry is locked by another process ({} exists)",
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }

    pub fn records(&self) -> Result<Vec<RegistryRecord>> {
        let path = self.path("registry.jsonl");
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1))
            })
            .collect()
    }

    /// SHA-256 of `registry.jsonl`, hex encoded.
    pub fn registry_hash(&self) -> Result<String> {
        let path = self.path("registry.jsonl");
        let bytes = if path.exists() {
            fs::read(&path).with_context(|| format!("reading {}", path.display()))?
        } else {
            Vec::new()
        };
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn append_record(&self, _lock: &RegistryLock, record: &RegistryRecord) -> Result<()> {
        let path = self.path("registry.jsonl");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        writeln!(f, "{}", serde_json::to_string(record)?)?;
        Ok(())
    }

    pub fn binning(&self) -> Result<Option<BinningScheme>> {
        let path = self.path("binning.json");
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
    }

    /// The frozen binning, created from `first` when none exists yet.
    pub fn binning_or_freeze(&self, _lock: &RegistryLock, first: &Dataset, bins: usize) -> Result<BinningScheme> {
        if let Some(b) = self.binning()? {
            return Ok(b);
        }
        let fitted = fit_binning(&[first], bins)?;
        let ranges = fitted
            .ranges()
            .iter()
            .map(|&(lo, hi)| {
                let pad = (hi - lo) * BINNING_MARGIN;
                (lo - pad, hi + pad)
            })
            .collect();
        let binning = BinningScheme::new(bins, ranges)?;
        write_json(&self.path("binning.json"), &binning)?;
        Ok(binning)
    }

    pub fn write_json<T: Serialize>(&self, rel: impl AsRef<Path>, value: &T) -> Result<()> {
        write_json(&self.path(rel), value)
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&self, rel: impl AsRef<Path>) -> Result<T> {
        let path = self.path(rel);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn load_dataset(&self, record: &RegistryRecord) -> Result<Option<Dataset>> {
        match &record.dataset {
            None => Ok(None),
            Some(rel) => {
                let path = self.path(rel);
                let has_label = csv::Reader::from_path(&path)
                    .with_context(|| format!("reading {}", path.display()))?
                    .headers()?
                    .iter()
                    .any(|h| h == "label");
                let data = load_csv(&path, has_label.then_some("label"))?;
                Ok(Some(data.with_id(record.id.clone())))
            }
        }
    }

    pub fn load_signatures(&self, record: &RegistryRecord) -> Result<SignatureFile> {
        self.read_json(&record.signatures)
    }

    /// Rebuilds the registry. Training data is read only when `with_data`.
    pub fn registry(&self, with_data: bool) -> Result<Registry> {
        let mut entries = Vec::new();
        for r in self.records()? {
            let mut e = ModelEntry::new(r.id.clone()).with_signatures(self.load_signatures(&r)?.signatures);
            e.source_accuracy = r.source_accuracy;
            if with_data {
                if let Some(d) = self.load_dataset(&r)? {
                    e = e.with_data(d);
                }
            }
            let predictor: Option<Arc<dyn PredictionProvider>> = match (&r.predictions, &r.predictor) {
                (Some(p), _) => Some(Arc::new(FilePredictions::load(self.path(p))?)),
                (None, Some(p)) => Some(Arc::new(self.read_json::<NearestCentroid>(p)?)),
                (None, None) => None,
            };
            if let Some(p) = predictor {
                e = e.with_predictor(p);
            }
            entries.push(e);
        }
        Registry::from_entries(entries).map_err(|e| anyhow!(e))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut f = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Master seed from, in order: flag, environment, config.
pub fn resolve_seed(flag: Option<u64>, config: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(config),
    }
}
