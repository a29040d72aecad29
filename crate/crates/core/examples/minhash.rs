//! MinHash Jaccard estimates and band matches for overlapping token sets.

use std::collections::BTreeSet;

use model_scout::minhash::{band_match_fraction, jaccard_estimate, MinHashFamily};

fn main() -> model_scout::Result<()> {
    let family = MinHashFamily::new(21, 256, 128)?;
    let a: BTreeSet<u64> = (0..1000).collect();
    let sig_a = family.minhash_set(&a)?;
    println!("{:>8} {:>8} {:>9} {:>11}", "shared", "exact", "estimate", "band match");
    for shared in [0u64, 250, 500, 750, 1000] {
        let b: BTreeSet<u64> = (1000 - shared..2000 - shared).collect();
        let exact = a.intersection(&b).count() as f64 / a.union(&b).count() as f64;
        let sig_b = family.minhash_set(&b)?;
        println!(
            "{shared:>8} {exact:>8.3} {:>9.3} {:>11.3}",
            jaccard_estimate(&sig_a, &sig_b)?,
            band_match_fraction(&sig_a, &sig_b)?
        );
    }
    Ok(())
}
