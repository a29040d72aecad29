//! The `model-scout` command line.

mod store;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use store::{
    resolve_seed, HashingFingerprint, ProjectConfig, ProjectStore, RegistryRecord, SignatureFile,
    CONFIG_FILE, SEED_ENV,
};

use crate::adaptivity::index::AutoOr;
use crate::adaptivity::{build_index, IndexConfig, IndexInput, ModelSource, TwoLevelIndex};
use crate::dataio::{load_csv, to_distribution, write_csv, Dataset};
use crate::evalbench::{build_skew_scenarios, run_benchmark, SkewBenchSpec};
use crate::jsdlsh::JsdLshFamily;
use crate::strategies::{
    rank_by_adaptivity, rank_by_js, rank_by_l2, rank_by_source_accuracy, rank_by_voting,
    AdaptivityMode, JsMode, NearestCentroid, Ranking, StoredSignatures,
};

#[derive(Debug, Parser)]
#[command(name = "model-scout", version, about = "Find the registered model best suited to a target dataset")]
pub struct Cli {
    /// Project directory holding the registry, index and reports.
    #[arg(long, global = true, env = "MODEL_SCOUT_PROJECT", default_value = ".")]
    pub project: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add a model, described by its training data, to the registry.
    Register(RegisterArgs),
    /// Show registered models.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Build the two-level LSH index over all registered models.
    BuildIndex(BuildArgs),
    /// Rank registered models for a target dataset.
    Query(QueryArgs),
    /// Run a synthetic benchmark described by a JSON scenario file.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Training data CSV (header row, numeric columns).
    pub dataset: PathBuf,
    /// Model id; defaults to the file stem.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub source_accuracy: Option<f64>,
    /// Label column: excluded from the features and used to fit a
    /// nearest-centroid predictor for voting.
    #[arg(long, conflicts_with = "predictions")]
    pub labels_column: Option<String>,
    /// `row_index,label` CSV with this model's predictions on the target,
    /// used for voting.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Keep only signatures and the center; no copy of the data is stored.
    #[arg(long)]
    pub signatures_only: bool,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub partition_size: Option<usize>,
    /// JS-divergence threshold for partition similarity.
    #[arg(long = "t")]
    pub t: Option<f64>,
    /// Adaptivity threshold stored as the query default.
    #[arg(long = "t-prime")]
    pub t_prime: Option<f64>,
    /// JSD-LSH bucket width.
    #[arg(long = "r")]
    pub r: Option<f64>,
    /// JSD-LSH hash count.
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// JSD-LSH bands, or "auto".
    #[arg(long = "L")]
    pub l: Option<AutoOr>,
    /// Minwise hash count.
    #[arg(long = "Km")]
    pub km: Option<usize>,
    /// Minwise bands.
    #[arg(long = "Lm")]
    pub lm: Option<usize>,
    /// Padding bound, or "auto" for the largest partition count.
    #[arg(long = "nu")]
    pub nu: Option<AutoOr>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    Js,
    L2,
    Adaptivity,
    Voting,
    SourceAccuracy,
    All,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Target CSV.
    pub target: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub strategy: Vec<StrategyArg>,
    /// Rows per ranking.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Exact JS and pairwise adaptivity.
    #[arg(long, conflicts_with = "lsh")]
    pub exact: bool,
    /// JSD-LSH estimates and the two-level index.
    #[arg(long)]
    pub lsh: bool,
    /// Column of the target file to ignore (e.g. labels).
    #[arg(long)]
    pub ignore_column: Option<String>,
    #[arg(long = "t-prime")]
    pub t_prime: Option<f64>,
    /// Print the JSON report instead of tables.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario JSON file.
    pub scenario: PathBuf,
    /// Output directory; defaults to reports/bench-<scenario stem>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses `args` and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    execute(cli)
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let store = ProjectStore::open(&cli.project)?;
    match cli.command {
        Command::Register(a) => register(&store, a),
        Command::List { json } => list(&store, json),
        Command::BuildIndex(a) => build(&store, a),
        Command::Query(a) => query(&store, a),
        Command::Bench(a) => bench(&store, a),
    }
}

fn valid_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) || id.starts_with('.') {
        bail!("model id {id:?} must be non-empty and use only letters, digits, '-', '_' and '.'");
    }
    Ok(())
}

fn project_index_config(store: &ProjectStore) -> Result<(ProjectConfig, IndexConfig)> {
    let config = store.config()?;
    let mut index = config.index.clone();
    index.seed = resolve_seed(None, index.seed)?;
    Ok((config, index))
}

fn register(store: &ProjectStore, a: RegisterArgs) -> Result<()> {
    let lock = store.lock()?;
    let data = load_csv(&a.dataset, a.labels_column.as_deref())?;
    let id = a.id.clone().unwrap_or_else(|| data.id().to_string());
    valid_id(&id)?;
    let data = data.with_id(id.clone());
    let records = store.records()?;
    if records.iter().any(|r| r.id == id) {
        bail!("model id {id:?} is already registered");
    }
    if let Some(first) = records.first() {
        if first.n_dims != data.n_dims() {
            bail!(
                "{} has {} feature columns, registered models have {}",
                a.dataset.display(),
                data.n_dims(),
                first.n_dims
            );
        }
    }
    if let Some(acc) = a.source_accuracy {
        if !(0.0..=1.0).contains(&acc) {
            bail!("source accuracy {acc} outside [0, 1]");
        }
    }

    let (config, index) = project_index_config(store)?;
    let binning = store.binning_or_freeze(&lock, &data, config.bins_per_dim)?;
    if binning.n_dims() != data.n_dims() {
        bail!("binning covers {} columns, dataset has {}", binning.n_dims(), data.n_dims());
    }
    let hasher = index.hasher(&binning)?;
    let whole = hasher.family().hash_distribution(&to_distribution(&data, &binning)?)?;
    let signatures = SignatureFile {
        hashing: HashingFingerprint::of(&index)?,
        signatures: StoredSignatures {
            center: data.center(),
            dataset: Some(whole),
            partitions: hasher.signatures(&data)?,
        },
    };
    let sig_rel = format!("signatures/{id}.json");
    store.write_json(&sig_rel, &signatures)?;

    let mut source_accuracy = a.source_accuracy;
    let predictor = if a.labels_column.is_some() {
        let model = NearestCentroid::fit(&data)?;
        source_accuracy.get_or_insert(model.accuracy(&data)?);
        let rel = format!("predictors/{id}.json");
        store.write_json(&rel, &model)?;
        Some(rel)
    } else {
        None
    };
    let predictions = match &a.predictions {
        Some(p) => {
            crate::strategies::FilePredictions::load(p)?;
            let rel = format!("predictions/{id}.csv");
            fs::create_dir_all(store.path("predictions"))?;
            fs::copy(p, store.path(&rel)).with_context(|| format!("copying {}", p.display()))?;
            Some(rel)
        }
        None => None,
    };
    let dataset = if a.signatures_only {
        None
    } else {
        let rel = format!("datasets/{id}.csv");
        fs::create_dir_all(store.path("datasets"))?;
        write_csv(&data, store.path(&rel))?;
        Some(rel)
    };
    let record = RegistryRecord {
        id: id.clone(),
        n_rows: data.n_rows(),
        n_dims: data.n_dims(),
        source: a.dataset.display().to_string(),
        source_accuracy,
        dataset,
        signatures: sig_rel,
        predictor,
        predictions,
    };
    store.append_record(&lock, &record)?;
    println!(
        "registered {id}: {} rows, {} partitions{}",
        data.n_rows(),
        signatures.signatures.partitions.len(),
        if a.signatures_only { ", signatures only" } else { "" }
    );
    Ok(())
}

fn list(store: &ProjectStore, json: bool) -> Result<()> {
    let records = store.records()?;
    if json {
        println!("{}", serde_json::to_string_pretty(&records)?);
        return Ok(());
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<24} {:>8} {:>6} {:>9}  stored", "id", "rows", "dims", "src_acc")?;
    for r in &records {
        let acc = r.source_accuracy.map_or("-".into(), |a| format!("{a:.4}"));
        let stored = if r.dataset.is_some() { "data+signatures" } else { "signatures" };
        writeln!(out, "{:<24} {:>8} {:>6} {:>9}  {stored}", r.id, r.n_rows, r.n_dims, acc)?;
    }
    writeln!(out, "{} models", records.len())?;
    Ok(())
}

#[derive(Debug, Serialize, serde::Deserialize)]
struct IndexSettings {
    t_prime: f64,
}

fn build(store: &ProjectStore, a: BuildArgs) -> Result<()> {
    let (config, mut index) = project_index_config(store)?;
    if let Some(v) = a.partition_size {
        index.partition_size = v;
    }
    if let Some(v) = a.t {
        index.js_threshold = v;
    }
    if let Some(v) = a.r {
        index.bucket_width = v;
    }
    if let Some(v) = a.k {
        index.jsd_hashes = v;
    }
    if let Some(v) = a.l {
        index.jsd_bands = v;
    }
    if let Some(v) = a.km {
        index.minwise_hashes = v;
    }
    if let Some(v) = a.lm {
        index.minwise_bands = v;
    }
    if let Some(v) = a.nu {
        index.padding = v;
    }
    index.seed = resolve_seed(a.seed, index.seed)?;
    let t_prime = a.t_prime.unwrap_or(config.t_prime);
    if !(t_prime > 0.0 && t_prime <= 1.0) {
        bail!("--t-prime {t_prime} outside (0, 1]");
    }

    let binning = store
        .binning()?
        .ok_or_else(|| anyhow!("no models registered yet"))?;
    let records = store.records()?;
    if records.is_empty() {
        bail!("no models registered yet");
    }
    let hash_before = store.registry_hash()?;
    let fingerprint = HashingFingerprint::of(&index)?;
    let mut data = Vec::new();
    let mut sigs = Vec::new();
    for r in &records {
        data.push(store.load_dataset(r)?);
        let s = store.load_signatures(r)?;
        if data.last().unwrap().is_none() && s.hashing != fingerprint {
            bail!(
                "{} is stored as signatures only, hashed with {:?}; the index needs {:?}",
                r.id,
                s.hashing,
                fingerprint
            );
        }
        sigs.push(s.signatures.partitions);
    }
    let inputs: Vec<IndexInput> = records
        .iter()
        .zip(&data)
        .zip(&sigs)
        .map(|((r, d), s)| IndexInput {
            id: &r.id,
            source: match d {
                Some(d) => ModelSource::Data(d),
                None => ModelSource::Signatures(s),
            },
            source_accuracy: r.source_accuracy,
        })
        .collect();
    let mut built = build_index(&inputs, &index, &binning)?;
    built.set_registry_hash(Some(hash_before));
    let dir = store.index_dir();
    built.save(&dir)?;
    store::write_json(&dir.join("settings.json"), &IndexSettings { t_prime })?;
    for w in built.warnings() {
        eprintln!("warning: {w}");
    }
    println!(
        "indexed {} models into {} (L = {}, n_u = {})",
        built.models().len(),
        dir.display(),
        built.jsd_bands(),
        built.n_u()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct StrategyReport {
    strategy: String,
    method: String,
    available: bool,
    reason: Option<String>,
    ranking: Vec<RankRow>,
}

#[derive(Debug, Serialize)]
struct RankRow {
    rank: usize,
    id: String,
    score: f64,
}

#[derive(Debug, Serialize)]
struct IndexMatch {
    t_prime: f64,
    target_partitions: usize,
    raw_threshold: f64,
    effective_threshold: f64,
    matched: Vec<String>,
}

#[derive(Debug, Serialize)]
struct QueryReport {
    target: String,
    target_rows: usize,
    k: usize,
    strategies: Vec<StrategyReport>,
    index: Option<IndexMatch>,
}

fn load_target(path: &Path, ignore: Option<&str>) -> Result<Dataset> {
    let data = load_csv(path, ignore)?;
    Ok(Dataset::new(data.id(), data.n_dims(), data.features().to_vec(), None)?)
}

fn fresh_index(store: &ProjectStore) -> Result<TwoLevelIndex> {
    let dir = store.index_dir();
    if !dir.join("manifest.json").exists() {
        bail!("no index built (run build-index)");
    }
    let index = TwoLevelIndex::load(&dir)?;
    let current = store.registry_hash()?;
    if index.registry_hash() != Some(current.as_str()) {
        bail!("index is stale: the registry changed since it was built (run build-index)");
    }
    Ok(index)
}

fn query(store: &ProjectStore, a: QueryArgs) -> Result<()> {
    if a.k == 0 {
        bail!("--k must be at least 1");
    }
    let mut wanted: Vec<StrategyArg> = Vec::new();
    for s in &a.strategy {
        let expand: &[StrategyArg] = match s {
            StrategyArg::All => &[
                StrategyArg::Js,
                StrategyArg::L2,
                StrategyArg::Adaptivity,
                StrategyArg::Voting,
                StrategyArg::SourceAccuracy,
            ],
            one => std::slice::from_ref(one),
        };
        for s in expand {
            if !wanted.contains(s) {
                wanted.push(*s);
            }
        }
    }

    let (config, index_config) = project_index_config(store)?;
    let binning = store
        .binning()?
        .ok_or_else(|| anyhow!("no models registered yet"))?;
    let registry = store.registry(true)?;
    if registry.is_empty() {
        bail!("no models registered yet");
    }
    let target = load_target(&a.target, a.ignore_column.as_deref())?;
    if target.n_dims() != binning.n_dims() {
        bail!(
            "target has {} feature columns, registered models have {}",
            target.n_dims(),
            binning.n_dims()
        );
    }
    let all_data = registry.entries().iter().all(|e| e.training_data.is_some());
    let signatures_only = |r: &crate::Error| matches!(r, crate::Error::MissingRepresentation { .. });

    let mut reports = Vec::new();
    let mut index_match = None;
    for s in &wanted {
        let (name, method, result): (&str, String, Result<Ranking>) = match s {
            StrategyArg::Js => {
                let use_lsh = a.lsh || (!a.exact && !all_data);
                if use_lsh {
                    let family = registered_family(store, &index_config, &binning);
                    let r = family.and_then(|f| {
                        rank_by_js(&registry, &target, JsMode::Lsh { binning: &binning, family: &f })
                            .map_err(|e| anyhow!(e))
                    });
                    ("js", "lsh".into(), r)
                } else {
                    let r = rank_by_js(&registry, &target, JsMode::Exact { binning: &binning });
                    ("js", "exact".into(), r.map_err(|e| describe(e, &signatures_only)))
                }
            }
            StrategyArg::L2 => ("l2", "center".into(), rank_by_l2(&registry, &target).map_err(|e| anyhow!(e))),
            StrategyArg::Adaptivity => {
                let use_index = a.lsh || (!a.exact && store.index_dir().join("manifest.json").exists());
                if use_index {
                    let r = fresh_index(store).and_then(|index| {
                        let t_prime = match a.t_prime {
                            Some(t) => t,
                            None => store
                                .read_json::<IndexSettings>("index/settings.json")
                                .map(|s| s.t_prime)
                                .unwrap_or(config.t_prime),
                        };
                        let q = index.query(&target, t_prime)?;
                        index_match = Some(IndexMatch {
                            t_prime,
                            target_partitions: q.target_partitions,
                            raw_threshold: q.raw_threshold,
                            effective_threshold: q.effective_threshold,
                            matched: q.matched.clone(),
                        });
                        rank_by_adaptivity(&registry, &target, AdaptivityMode::Index { index: &index, t_prime })
                            .map_err(|e| anyhow!(e))
                    });
                    ("adaptivity", "two-level index".into(), r)
                } else {
                    let mode = AdaptivityMode::pairwise(&index_config, &binning);
                    let r = rank_by_adaptivity(&registry, &target, mode);
                    ("adaptivity", "pairwise".into(), r.map_err(|e| describe(e, &signatures_only)))
                }
            }
            StrategyArg::Voting => ("voting", "majority".into(), rank_by_voting(&registry, &target).map_err(|e| anyhow!(e))),
            StrategyArg::SourceAccuracy => (
                "source-accuracy",
                "registered".into(),
                rank_by_source_accuracy(&registry).map_err(|e| anyhow!(e)),
            ),
            StrategyArg::All => unreachable!("expanded above"),
        };
        reports.push(match result {
            Ok(r) => StrategyReport {
                strategy: name.into(),
                method,
                available: true,
                reason: None,
                ranking: r
                    .entries
                    .iter()
                    .take(a.k)
                    .enumerate()
                    .map(|(i, e)| RankRow {
                        rank: i + 1,
                        id: e.id.clone(),
                        score: e.score,
                    })
                    .collect(),
            },
            Err(e) => StrategyReport {
                strategy: name.into(),
                method,
                available: false,
                reason: Some(format!("{e:#}")),
                ranking: Vec::new(),
            },
        });
    }

    let report = QueryReport {
        target: a.target.display().to_string(),
        target_rows: target.n_rows(),
        k: a.k,
        strategies: reports,
        index: index_match,
    };
    let stem = a
        .target
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "target".into());
    let out_path = store.reports_dir()?.join(format!("query-{stem}.json"));
    store::write_json(&out_path, &report)?;

    let mut out = std::io::stdout().lock();
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        for s in &report.strategies {
            writeln!(out, "== {} ({})", s.strategy, s.method)?;
            if !s.available {
                writeln!(out, "   unavailable: {}", s.reason.as_deref().unwrap_or(""))?;
                continue;
            }
            for r in &s.ranking {
                writeln!(out, "{:>4}  {:<24} {:.6}", r.rank, r.id, r.score)?;
            }
        }
        if let Some(m) = &report.index {
            writeln!(
                out,
                "index: t' = {}, threshold {:.4} (raw {:.4}), matched: {}",
                m.t_prime,
                m.effective_threshold,
                m.raw_threshold,
                if m.matched.is_empty() { "none".to_string() } else { m.matched.join(", ") }
            )?;
        }
        writeln!(out, "report: {}", out_path.display())?;
    }
    if report.strategies.iter().all(|s| !s.available) {
        bail!("no requested strategy could run");
    }
    Ok(())
}

fn describe(e: crate::Error, signatures_only: &dyn Fn(&crate::Error) -> bool) -> anyhow::Error {
    if signatures_only(&e) {
        anyhow!("unavailable (signatures-only): {e}")
    } else {
        anyhow!(e)
    }
}

/// The JSD-LSH family the stored whole-dataset signatures were made with.
fn registered_family(
    store: &ProjectStore,
    config: &IndexConfig,
    binning: &crate::dataio::BinningScheme,
) -> Result<JsdLshFamily> {
    let records = store.records()?;
    let first = records.first().ok_or_else(|| anyhow!("no models registered yet"))?;
    let fp = store.load_signatures(first)?.hashing;
    for r in &records[1..] {
        if store.load_signatures(r)?.hashing != fp {
            bail!("models were registered with different hashing settings; JS-LSH signatures are not comparable");
        }
    }
    let seeds = IndexConfig {
        seed: fp.seed,
        ..config.clone()
    }
    .seeds();
    Ok(JsdLshFamily::new(
        seeds.jsd,
        fp.jsd_hashes,
        fp.jsd_bands,
        fp.bucket_width,
        binning.omega_size(),
    )?)
}

fn bench(store: &ProjectStore, a: BenchArgs) -> Result<()> {
    let text = fs::read_to_string(&a.scenario).with_context(|| format!("reading {}", a.scenario.display()))?;
    let mut spec: SkewBenchSpec = serde_json::from_str(&text).map_err(|e| {
        anyhow!(
            "{}: invalid scenario at line {}, column {}: {e}",
            a.scenario.display(),
            e.line(),
            e.column()
        )
    })?;
    let seed = resolve_seed(a.seed, spec.seed)?;
    if seed != spec.seed {
        spec.seed = seed;
        spec.index.seed = seed;
    }
    let scenarios = build_skew_scenarios(&spec)?;
    let report = run_benchmark(&scenarios, &spec.strategies, &spec.bench_config())?;
    let out = match a.out {
        Some(d) => d,
        None => {
            let stem = a
                .scenario
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into());
            store.reports_dir()?.join(format!("bench-{stem}"))
        }
    };
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let table = report.to_table();
    fs::write(out.join("report.json"), report.to_json()?)?;
    fs::write(out.join("rankings.json"), report.rankings_json()?)?;
    fs::write(out.join("table.txt"), &table)?;
    print!("{table}");
    println!("report: {}", out.display());
    Ok(())
}
