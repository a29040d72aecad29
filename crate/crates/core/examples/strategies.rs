//! Every ranking strategy over the same registry: JS (exact and LSH), L2
//! center distance, pairwise adaptivity, voting and source accuracy.

use std::sync::Arc;

use model_scout::adaptivity::IndexConfig;
use model_scout::evalbench::GaussianClasses;
use model_scout::jsdlsh::JsdLshFamily;
use model_scout::strategies::{
    rank_by_adaptivity, rank_by_js, rank_by_l2, rank_by_source_accuracy, rank_by_voting, AdaptivityMode,
    JsMode, ModelEntry, NearestCentroid, Ranking, Registry,
};
use model_scout::fit_binning;

fn main() -> model_scout::Result<()> {
    let classes = GaussianClasses::new(3, 2, 4.0, 1.0, 3)?;
    let mixes = [("mostly-a", [800, 100, 100]), ("even", [340, 330, 330]), ("mostly-c", [100, 100, 800])];
    let mut registry = Registry::new();
    for (i, (id, counts)) in mixes.iter().enumerate() {
        let data = Arc::new(classes.sample(*id, counts, 20 + i as u64)?);
        let model = NearestCentroid::fit(&data)?;
        let accuracy = model.accuracy(&data)?;
        registry.insert(
            ModelEntry::new(*id)
                .with_data(data)
                .with_predictor(Arc::new(model))
                .with_source_accuracy(accuracy),
        )?;
    }
    let target = classes.sample("target", &[700, 150, 150], 77)?;

    let mut all: Vec<_> = registry.datasets();
    all.push(&target);
    let binning = fit_binning(&all, 10)?;
    let family = JsdLshFamily::new(9, 800, 200, 1.4, binning.omega_size())?;
    let config = IndexConfig { partition_size: 100, ..IndexConfig::default() };

    let rankings = [
        rank_by_js(&registry, &target, JsMode::Exact { binning: &binning })?,
        rank_by_js(&registry, &target, JsMode::Lsh { binning: &binning, family: &family })?,
        rank_by_l2(&registry, &target)?,
        rank_by_adaptivity(&registry, &target, AdaptivityMode::pairwise(&config, &binning))?,
        rank_by_voting(&registry, &target)?,
        rank_by_source_accuracy(&registry)?,
    ];
    for r in &rankings {
        show(r);
    }
    Ok(())
}

fn show(r: &Ranking) {
    let entries: Vec<String> = r.entries.iter().map(|e| format!("{}={:.4}", e.id, e.score)).collect();
    println!("{:<17} {}", r.strategy, entries.join("  "));
}
