//! Exact KL and JS divergences between class-mixture histograms, and the
//! L2 distance between dataset centers.

use model_scout::evalbench::GaussianClasses;
use model_scout::metrics::{js_divergence, kl_divergence, l2_center_distance};
use model_scout::{fit_binning, to_distribution};

fn main() -> model_scout::Result<()> {
    let classes = GaussianClasses::new(4, 3, 3.0, 1.0, 11)?;
    let mixes: [(&str, [usize; 4]); 4] = [
        ("balanced", [250, 250, 250, 250]),
        ("balanced-2", [250, 250, 250, 250]),
        ("tilted", [400, 300, 200, 100]),
        ("one-class", [1000, 0, 0, 0]),
    ];
    let datasets = mixes
        .iter()
        .enumerate()
        .map(|(i, (id, counts))| classes.sample(*id, counts, 100 + i as u64))
        .collect::<model_scout::Result<Vec<_>>>()?;
    let refs: Vec<_> = datasets.iter().collect();
    let binning = fit_binning(&refs, 8)?;
    let dists = datasets
        .iter()
        .map(|d| to_distribution(d, &binning))
        .collect::<model_scout::Result<Vec<_>>>()?;

    let base = &datasets[0];
    println!("{:<12} {:>8} {:>8} {:>8}", "vs balanced", "JS", "KL", "L2");
    for (d, p) in datasets.iter().zip(&dists).skip(1) {
        let js = js_divergence(&dists[0], p)?;
        // both are smoothed, so KL stays finite when a cell is empty on one side
        let kl = kl_divergence(&dists[0], p)?;
        println!("{:<12} {js:>8.4} {kl:>8.4} {:>8.4}", d.id(), l2_center_distance(base, d)?);
    }
    Ok(())
}
