//! Adaptivity is asymmetric: a source covering every class adapts to a
//! narrower target, but not the other way round. Also shows the
//! adaptivity/Jaccard conversion the index relies on.

use model_scout::adaptivity::{
    adaptivity_pairwise, adaptivity_to_jaccard, jaccard_to_adaptivity, PartitionSet,
};
use model_scout::evalbench::GaussianClasses;
use model_scout::{fit_binning, Dataset};

fn main() -> model_scout::Result<()> {
    let classes = GaussianClasses::new(4, 2, 6.0, 1.0, 5)?;
    let wide = blocked(&classes, "all-classes", 4, 1)?;
    let narrow = blocked(&classes, "two-classes", 2, 2)?;
    let binning = fit_binning(&[&wide, &narrow], 8)?;
    let size = 50;
    let t = 0.1;

    let parts = |d: &Dataset| PartitionSet::contiguous(d, size);
    let (pw, pn) = (parts(&wide)?, parts(&narrow)?);
    let down = adaptivity_pairwise((&pw, &wide), (&pn, &narrow), t, &binning)?;
    let up = adaptivity_pairwise((&pn, &narrow), (&pw, &wide), t, &binning)?;
    println!("adaptivity all-classes -> two-classes: {down:.3}");
    println!("adaptivity two-classes -> all-classes: {up:.3}");

    let (n, m) = (pw.len(), pn.len());
    let j = adaptivity_to_jaccard(down, n, m)?;
    println!("as partition-set Jaccard (n = {n}, m = {m}): {j:.3}, back: {:.3}", jaccard_to_adaptivity(j, n, m)?);
    Ok(())
}

/// 200 rows of each of the first `n_classes` classes, one class after the
/// other, so contiguous partitions are single-class.
fn blocked(classes: &GaussianClasses, id: &str, n_classes: usize, seed: u64) -> model_scout::Result<Dataset> {
    let parts = (0..n_classes)
        .map(|c| {
            let mut counts = vec![0; classes.n_classes()];
            counts[c] = 200;
            classes.sample(format!("{id}-{c}"), &counts, seed * 10 + c as u64)
        })
        .collect::<model_scout::Result<Vec<_>>>()?;
    Dataset::concat(id, &parts.iter().collect::<Vec<_>>())
}
