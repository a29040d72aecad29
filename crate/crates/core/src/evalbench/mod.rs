//! Benchmark harness: correlation and top-k metrics, synthetic skewed
//! workloads, and side-by-side strategy reports.

mod bench;
mod synth;

use std::collections::BTreeSet;

pub use bench::{
    load_accuracy_table, run_benchmark, AdaptivityComparison, BenchConfig, BenchReport,
    BenchScenario, GroundTruth, LatencyPhases, ScenarioOutcome, StrategyKind, StrategyOutcome,
    StrategySummary,
};
pub use synth::{
    build_skew_scenarios, make_skewed_corpus, GaussianClasses, GroundTruthModel, SkewBenchSpec,
    SkewSpec,
};

use crate::error::{Error, Result};

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Metric(format!(
            "pearson needs equal lengths, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Metric("pearson needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Metric("pearson is undefined for zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Fraction of scenarios whose true best model is missing from the
/// predicted top-k set. Order within a set does not matter.
pub fn top_k_error<S: AsRef<str>>(
    predictions: &[BTreeSet<String>],
    truths: &[S],
    k: usize,
) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::Metric(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Metric("top-k error over zero scenarios".into()));
    }
    let mut misses = 0;
    for (set, truth) in predictions.iter().zip(truths) {
        if set.len() != k {
            return Err(Error::Metric(format!(
                "prediction set of size {} for k = {k}",
                set.len()
            )));
        }
        if !set.contains(truth.as_ref()) {
            misses += 1;
        }
    }
    Ok(misses as f64 / predictions.len() as f64)
}
