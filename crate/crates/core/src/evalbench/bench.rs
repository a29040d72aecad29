use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{pearson, top_k_error};
use crate::adaptivity::{build_index, IndexConfig, IndexInput, ModelSource};
use crate::dataio::{fit_binning, to_distribution, BinningScheme, Dataset};
use crate::error::{Error, Result};
use crate::jsdlsh::JsdLshFamily;
use crate::strategies::{
    rank_by_adaptivity, rank_by_js, rank_by_l2, rank_by_source_accuracy, rank_by_voting, top_k,
    AdaptivityMode, JsMode, ModelEntry, Ranking, Registry, StoredSignatures,
};

/// Strategies the harness knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Js,
    JsLsh,
    L2,
    Adaptivity,
    AdaptivityIndex,
    Voting,
    SourceAccuracy,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::Js,
        StrategyKind::JsLsh,
        StrategyKind::L2,
        StrategyKind::Adaptivity,
        StrategyKind::AdaptivityIndex,
        StrategyKind::Voting,
        StrategyKind::SourceAccuracy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Js => "js",
            StrategyKind::JsLsh => "js-lsh",
            StrategyKind::L2 => "l2",
            StrategyKind::Adaptivity => "adaptivity",
            StrategyKind::AdaptivityIndex => "adaptivity-index",
            StrategyKind::Voting => "voting",
            StrategyKind::SourceAccuracy => "source-accuracy",
        }
    }
}

/// What counts as the right answer in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    /// Accuracy of every candidate on the target.
    Accuracies(BTreeMap<String, f64>),
    BestModel(String),
}

/// One search: a candidate corpus, a target, and the known answer.
#[derive(Debug, Clone)]
pub struct BenchScenario {
    pub id: String,
    pub registry: Registry,
    pub target: Dataset,
    pub ground_truth: GroundTruth,
}

impl BenchScenario {
    pub fn new(
        id: impl Into<String>,
        registry: Registry,
        target: Dataset,
        ground_truth: GroundTruth,
    ) -> Result<Self> {
        let id = id.into();
        let ids: BTreeSet<&str> = registry.entries().iter().map(|e| e.id.as_str()).collect();
        if ids.is_empty() {
            return Err(Error::InvalidParameter(format!("scenario {id} has no candidates")));
        }
        match &ground_truth {
            GroundTruth::Accuracies(acc) => {
                let known: BTreeSet<&str> = acc.keys().map(String::as_str).collect();
                if known != ids {
                    return Err(Error::InvalidParameter(format!(
                        "scenario {id}: ground truth must cover exactly the candidates"
                    )));
                }
                if let Some((m, a)) = acc.iter().find(|(_, a)| !(0.0..=1.0).contains(*a)) {
                    return Err(Error::InvalidParameter(format!(
                        "scenario {id}: accuracy {a} of {m} outside [0, 1]"
                    )));
                }
            }
            GroundTruth::BestModel(best) => {
                if !ids.contains(best.as_str()) {
                    return Err(Error::InvalidParameter(format!(
                        "scenario {id}: best model {best} is not a candidate"
                    )));
                }
            }
        }
        Ok(BenchScenario {
            id,
            registry,
            target,
            ground_truth,
        })
    }

    /// Highest-accuracy candidate, ties to the smaller id.
    pub fn best_model(&self) -> &str {
        match &self.ground_truth {
            GroundTruth::BestModel(id) => id,
            GroundTruth::Accuracies(acc) => {
                let mut best: Option<(&String, f64)> = None;
                for (id, &a) in acc {
                    if best.is_none_or(|(_, b)| a > b) {
                        best = Some((id, a));
                    }
                }
                best.expect("validated non-empty").0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub bins_per_dim: usize,
    pub index: IndexConfig,
    pub t_prime: f64,
    /// Timed repetitions per strategy; latencies are medians.
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            bins_per_dim: 10,
            index: IndexConfig::default(),
            t_prime: 0.5,
            repetitions: 5,
        }
    }
}

/// Median wall-clock milliseconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyPhases {
    pub preprocess_ms: f64,
    pub build_ms: f64,
    pub query_ms: f64,
}

impl LatencyPhases {
    pub fn total_ms(&self) -> f64 {
        self.preprocess_ms + self.build_ms + self.query_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: StrategyKind,
    pub ranking: Option<Ranking>,
    /// Pearson correlation between scores and target accuracies.
    pub pcc: Option<f64>,
    /// Whether the best model is in the top 1, 2, 3 (as far as the corpus
    /// size allows).
    pub top_k_hits: Vec<bool>,
    pub latency: LatencyPhases,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: String,
    pub best_model: String,
    pub outcomes: Vec<StrategyOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: StrategyKind,
    pub scenarios: usize,
    pub failures: usize,
    pub mean_pcc: Option<f64>,
    pub mean_abs_pcc: Option<f64>,
    /// Top-k error for k = 1, 2, 3; `None` where no corpus had k models.
    pub top_k_error: Vec<Option<f64>>,
    /// Mean over scenarios of the per-scenario medians.
    pub latency: LatencyPhases,
}

/// Pairwise versus index-backed adaptivity on the same scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptivityComparison {
    pub scenarios: usize,
    pub pairwise_query_ms: f64,
    pub index_build_ms: f64,
    pub index_query_ms: f64,
    /// Pairwise query time over index query time.
    pub query_speedup: f64,
    /// Share of scenarios where both put the same model first.
    pub top1_agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub strategies: Vec<StrategyKind>,
    pub summaries: Vec<StrategySummary>,
    pub adaptivity: Option<AdaptivityComparison>,
    pub scenarios: Vec<ScenarioOutcome>,
}

#[derive(Serialize)]
struct RankingRecord<'a> {
    scenario: &'a str,
    strategy: StrategyKind,
    ranking: Option<&'a Ranking>,
    error: Option<&'a str>,
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Rankings only, without timings; identical across reruns with the
    /// same seeds.
    pub fn rankings_json(&self) -> Result<String> {
        let records: Vec<RankingRecord> = self
            .scenarios
            .iter()
            .flat_map(|s| {
                s.outcomes.iter().map(move |o| RankingRecord {
                    scenario: &s.scenario,
                    strategy: o.strategy,
                    ranking: o.ranking.as_ref(),
                    error: o.error.as_deref(),
                })
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&records)?;
        s.push('\n');
        Ok(s)
    }

    pub fn summary(&self, strategy: StrategyKind) -> Option<&StrategySummary> {
        self.summaries.iter().find(|s| s.strategy == strategy)
    }

    pub fn outcome(&self, scenario: &str, strategy: StrategyKind) -> Option<&StrategyOutcome> {
        self.scenarios
            .iter()
            .find(|s| s.scenario == scenario)?
            .outcomes
            .iter()
            .find(|o| o.strategy == strategy)
    }

    /// Aligned text table of the per-strategy summaries.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        let header = [
            "strategy", "runs", "fail", "pcc", "|pcc|", "top1_err", "top2_err", "top3_err",
            "prep_ms", "build_ms", "query_ms",
        ];
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
        for s in &self.summaries {
            let err = |k: usize| fmt(s.top_k_error.get(k).copied().flatten());
            rows.push(vec![
                s.strategy.name().to_string(),
                s.scenarios.to_string(),
                s.failures.to_string(),
                fmt(s.mean_pcc),
                fmt(s.mean_abs_pcc),
                err(0),
                err(1),
                err(2),
                format!("{:.3}", s.latency.preprocess_ms),
                format!("{:.3}", s.latency.build_ms),
                format!("{:.3}", s.latency.query_ms),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| {
                    if i == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        if let Some(a) = &self.adaptivity {
            let _ = writeln!(
                out,
                "\nadaptivity: pairwise query {:.3} ms, index build {:.3} ms, index query {:.3} ms, speedup {:.1}x, top-1 agreement {:.2}",
                a.pairwise_query_ms, a.index_build_ms, a.index_query_ms, a.query_speedup, a.top1_agreement
            );
        }
        out
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs one strategy once, returning the ranking and per-phase durations.
fn run_once(
    kind: StrategyKind,
    scenario: &BenchScenario,
    binning: &BinningScheme,
    config: &BenchConfig,
) -> Result<(Ranking, [Duration; 3])> {
    let registry = &scenario.registry;
    let target = &scenario.target;
    let zero = Duration::ZERO;
    let timed = |f: &dyn Fn() -> Result<Ranking>| -> Result<(Ranking, Duration)> {
        let start = Instant::now();
        let r = f()?;
        Ok((r, start.elapsed()))
    };
    match kind {
        StrategyKind::Js => {
            let (r, q) = timed(&|| rank_by_js(registry, target, JsMode::Exact { binning }))?;
            Ok((r, [zero, zero, q]))
        }
        StrategyKind::L2 => {
            let (r, q) = timed(&|| rank_by_l2(registry, target))?;
            Ok((r, [zero, zero, q]))
        }
        StrategyKind::Voting => {
            let (r, q) = timed(&|| rank_by_voting(registry, target))?;
            Ok((r, [zero, zero, q]))
        }
        StrategyKind::SourceAccuracy => {
            let (r, q) = timed(&|| rank_by_source_accuracy(registry))?;
            Ok((r, [zero, zero, q]))
        }
        StrategyKind::Adaptivity => {
            let mode = AdaptivityMode::pairwise(&config.index, binning);
            let (r, q) = timed(&|| rank_by_adaptivity(registry, target, mode))?;
            Ok((r, [zero, zero, q]))
        }
        StrategyKind::JsLsh => {
            let start = Instant::now();
            let (bands, _) = config.index.resolve_bands()?;
            let family = JsdLshFamily::new(
                config.index.seeds().jsd,
                config.index.jsd_hashes,
                bands,
                config.index.bucket_width,
                binning.omega_size(),
            )?;
            let hashed = registry
                .entries()
                .iter()
                .map(|e| {
                    let data = e.training_data.as_deref().ok_or_else(|| Error::MissingRepresentation {
                        id: e.id.clone(),
                        what: "training data",
                    })?;
                    let sig = family.hash_distribution(&to_distribution(data, binning)?)?;
                    let mut entry = ModelEntry::new(e.id.clone()).with_signatures(StoredSignatures {
                        center: data.center(),
                        dataset: Some(sig),
                        partitions: Vec::new(),
                    });
                    entry.source_accuracy = e.source_accuracy;
                    Ok(entry)
                })
                .collect::<Result<Vec<_>>>()?;
            let hashed = Registry::from_entries(hashed)?;
            let prep = start.elapsed();
            let (r, q) = timed(&|| {
                rank_by_js(
                    &hashed,
                    target,
                    JsMode::Lsh {
                        binning,
                        family: &family,
                    },
                )
            })?;
            Ok((r, [prep, zero, q]))
        }
        StrategyKind::AdaptivityIndex => {
            let start = Instant::now();
            let inputs = registry
                .entries()
                .iter()
                .map(|e| {
                    let source = match (&e.training_data, &e.signatures) {
                        (Some(d), _) => ModelSource::Data(d),
                        (None, Some(s)) if !s.partitions.is_empty() => ModelSource::Signatures(&s.partitions),
                        _ => {
                            return Err(Error::MissingRepresentation {
                                id: e.id.clone(),
                                what: "training data or partition signatures",
                            })
                        }
                    };
                    Ok(IndexInput {
                        id: &e.id,
                        source,
                        source_accuracy: e.source_accuracy,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let index = build_index(&inputs, &config.index, binning)?;
            let build = start.elapsed();
            let mode = AdaptivityMode::Index {
                index: &index,
                t_prime: config.t_prime,
            };
            let (r, q) = timed(&|| rank_by_adaptivity(registry, target, mode))?;
            Ok((r, [zero, build, q]))
        }
    }
}

fn scenario_binning(scenario: &BenchScenario, bins: usize) -> Result<BinningScheme> {
    let datasets = scenario.registry.datasets();
    if datasets.is_empty() {
        fit_binning(&[&scenario.target], bins)
    } else {
        fit_binning(&datasets, bins)
    }
}

fn evaluate(
    kind: StrategyKind,
    scenario: &BenchScenario,
    binning: &Result<BinningScheme>,
    config: &BenchConfig,
) -> StrategyOutcome {
    let failed = |e: &Error| StrategyOutcome {
        strategy: kind,
        ranking: None,
        pcc: None,
        top_k_hits: Vec::new(),
        latency: LatencyPhases::default(),
        error: Some(e.to_string()),
    };
    let binning = match binning {
        Ok(b) => b,
        Err(e) => return failed(e),
    };
    let reps = config.repetitions.max(1);
    let mut ranking = None;
    let mut phases: [Vec<f64>; 3] = Default::default();
    for _ in 0..reps {
        match run_once(kind, scenario, binning, config) {
            Ok((r, d)) => {
                for (p, d) in phases.iter_mut().zip(d) {
                    p.push(ms(d));
                }
                ranking.get_or_insert(r);
            }
            Err(e) => {
                log::warn!("{} on {}: {e}", kind.name(), scenario.id);
                return failed(&e);
            }
        }
    }
    let ranking = ranking.expect("at least one repetition");
    let [p, b, q] = phases;
    let latency = LatencyPhases {
        preprocess_ms: median(p),
        build_ms: median(b),
        query_ms: median(q),
    };

    let pcc = match &scenario.ground_truth {
        GroundTruth::Accuracies(acc) => {
            let (xs, ys): (Vec<f64>, Vec<f64>) = ranking
                .entries
                .iter()
                .map(|e| (e.score, acc[&e.id]))
                .unzip();
            pearson(&xs, &ys).ok()
        }
        GroundTruth::BestModel(_) => None,
    };
    let best = scenario.best_model();
    let top_k_hits = (1..=3.min(ranking.len()))
        .map(|k| top_k(&ranking, k).map(|ids| ids.iter().any(|id| id == best)).unwrap_or(false))
        .collect();
    StrategyOutcome {
        strategy: kind,
        ranking: Some(ranking),
        pcc,
        top_k_hits,
        latency,
        error: None,
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn summarize(kind: StrategyKind, scenarios: &[ScenarioOutcome]) -> Result<StrategySummary> {
    let runs: Vec<(&ScenarioOutcome, &StrategyOutcome)> = scenarios
        .iter()
        .filter_map(|s| s.outcomes.iter().find(|o| o.strategy == kind).map(|o| (s, o)))
        .collect();
    let ok: Vec<(&ScenarioOutcome, &StrategyOutcome)> =
        runs.iter().copied().filter(|(_, o)| o.ranking.is_some()).collect();
    let pccs: Vec<f64> = ok.iter().filter_map(|(_, o)| o.pcc).collect();
    let mut errors = Vec::new();
    for k in 1..=3 {
        let eligible: Vec<_> = ok
            .iter()
            .filter(|(_, o)| o.ranking.as_ref().is_some_and(|r| r.len() >= k))
            .collect();
        if eligible.is_empty() {
            errors.push(None);
            continue;
        }
        let sets: Vec<BTreeSet<String>> = eligible
            .iter()
            .map(|(_, o)| Ok(top_k(o.ranking.as_ref().expect("filtered"), k)?.into_iter().collect()))
            .collect::<Result<_>>()?;
        let truths: Vec<&str> = eligible.iter().map(|(s, _)| s.best_model.as_str()).collect();
        errors.push(Some(top_k_error(&sets, &truths, k)?));
    }
    let lat: Vec<LatencyPhases> = ok.iter().map(|(_, o)| o.latency).collect();
    let avg = |f: fn(&LatencyPhases) -> f64| mean(&lat.iter().map(f).collect::<Vec<_>>()).unwrap_or(0.0);
    Ok(StrategySummary {
        strategy: kind,
        scenarios: ok.len(),
        failures: runs.len() - ok.len(),
        mean_pcc: mean(&pccs),
        mean_abs_pcc: mean(&pccs.iter().map(|p| p.abs()).collect::<Vec<_>>()),
        top_k_error: errors,
        latency: LatencyPhases {
            preprocess_ms: avg(|l| l.preprocess_ms),
            build_ms: avg(|l| l.build_ms),
            query_ms: avg(|l| l.query_ms),
        },
    })
}

fn compare_adaptivity(scenarios: &[ScenarioOutcome]) -> Option<AdaptivityComparison> {
    let pairs: Vec<(&StrategyOutcome, &StrategyOutcome)> = scenarios
        .iter()
        .filter_map(|s| {
            let find = |k| s.outcomes.iter().find(|o| o.strategy == k && o.ranking.is_some());
            Some((find(StrategyKind::Adaptivity)?, find(StrategyKind::AdaptivityIndex)?))
        })
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let pairwise = pairs.iter().map(|(p, _)| p.latency.query_ms).sum::<f64>() / n;
    let build = pairs.iter().map(|(_, i)| i.latency.build_ms).sum::<f64>() / n;
    let query = pairs.iter().map(|(_, i)| i.latency.query_ms).sum::<f64>() / n;
    let first = |o: &StrategyOutcome| o.ranking.as_ref().and_then(|r| r.entries.first().map(|e| e.id.clone()));
    let agree = pairs.iter().filter(|(p, i)| first(p) == first(i)).count() as f64 / n;
    Some(AdaptivityComparison {
        scenarios: pairs.len(),
        pairwise_query_ms: pairwise,
        index_build_ms: build,
        index_query_ms: query,
        query_speedup: if query > 0.0 { pairwise / query } else { f64::INFINITY },
        top1_agreement: agree,
    })
}

/// Runs every strategy on every scenario. A strategy whose prerequisites a
/// scenario lacks is recorded as failed for that scenario only.
pub fn run_benchmark(
    scenarios: &[BenchScenario],
    strategies: &[StrategyKind],
    config: &BenchConfig,
) -> Result<BenchReport> {
    if scenarios.is_empty() || strategies.is_empty() {
        return Err(Error::InvalidParameter("need at least one scenario and one strategy".into()));
    }
    config.index.validate()?;
    let outcomes: Vec<ScenarioOutcome> = scenarios
        .iter()
        .map(|s| {
            let binning = scenario_binning(s, config.bins_per_dim);
            ScenarioOutcome {
                scenario: s.id.clone(),
                best_model: s.best_model().to_string(),
                outcomes: strategies.iter().map(|&k| evaluate(k, s, &binning, config)).collect(),
            }
        })
        .collect();
    let summaries = strategies
        .iter()
        .map(|&k| summarize(k, &outcomes))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        config: config.clone(),
        strategies: strategies.to_vec(),
        summaries,
        adaptivity: compare_adaptivity(&outcomes),
        scenarios: outcomes,
    })
}

#[derive(Deserialize)]
struct AccuracyRow {
    model_id: String,
    scenario_id: String,
    accuracy: f64,
}

/// Reads a `model_id,scenario_id,accuracy` CSV into scenario -> model ->
/// accuracy.
pub fn load_accuracy_table(path: impl AsRef<Path>) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<AccuracyRow>().enumerate() {
        let parse = |column: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            column: column.to_string(),
            message,
        };
        let row = row.map_err(|e| parse("<record>", e.to_string()))?;
        if !(0.0..=1.0).contains(&row.accuracy) {
            return Err(parse("accuracy", format!("{} outside [0, 1]", row.accuracy)));
        }
        let slot = table.entry(row.scenario_id.clone()).or_default();
        if slot.insert(row.model_id.clone(), row.accuracy).is_some() {
            return Err(parse(
                "model_id",
                format!("{} listed twice for {}", row.model_id, row.scenario_id),
            ));
        }
    }
    if table.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Ok(table)
}
