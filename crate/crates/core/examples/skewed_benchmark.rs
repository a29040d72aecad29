//! Five class-skewed training sets, one model each, and a fresh target per
//! variant. Prints the strategy summary and each strategy's pick on the
//! balanced target.

use model_scout::evalbench::{build_skew_scenarios, run_benchmark, SkewBenchSpec};

fn main() -> model_scout::Result<()> {
    let spec = SkewBenchSpec::default();
    let scenarios = build_skew_scenarios(&spec)?;
    let report = run_benchmark(&scenarios, &spec.strategies, &spec.bench_config())?;
    print!("{}", report.to_table());

    for s in &report.scenarios {
        println!("\n{} (best: {})", s.scenario, s.best_model);
        for o in &s.outcomes {
            match &o.ranking {
                Some(r) => {
                    let top: Vec<String> = r
                        .entries
                        .iter()
                        .map(|e| format!("{}={:.4}", e.id, e.score))
                        .collect();
                    println!("  {:<17} {}", o.strategy.name(), top.join(" "));
                }
                None => println!("  {:<17} unavailable: {}", o.strategy.name(), o.error.as_deref().unwrap_or("")),
            }
        }
    }
    Ok(())
}
