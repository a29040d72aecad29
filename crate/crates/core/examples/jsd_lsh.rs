//! JSD-LSH signatures: band-collision rates fall as JS divergence grows,
//! and the analytic collision curve predicts the raw-hash rate.

use model_scout::jsdlsh::{collision_estimate, collision_probability, JsdLshFamily};
use model_scout::metrics::js_divergence;
use model_scout::ProbDistribution;

fn main() -> model_scout::Result<()> {
    let omega = 16;
    let family = JsdLshFamily::new(3, 800, 200, 1.4, omega)?;
    let base: Vec<f64> = (0..omega).map(|i| 1.0 + (i % 4) as f64).collect();
    let p = normalized(&base)?;
    let sig_p = family.hash_distribution(&p)?;
    let raw_p = family.raw_hashes(&p)?;

    println!("{:>6} {:>8} {:>10} {:>10} {:>10}", "mix", "JS", "raw rate", "curve", "band rate");
    for step in 0..=5 {
        // slide mass from the first half of the cells to the second half
        let mix = step as f64 / 5.0;
        let shifted: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(i, w)| if i < omega / 2 { w * (1.0 - mix) + 0.01 } else { w * (1.0 + mix) })
            .collect();
        let q = normalized(&shifted)?;
        let raw_q = family.raw_hashes(&q)?;
        let raw_rate = raw_p.iter().zip(&raw_q).filter(|(a, b)| a == b).count() as f64 / raw_p.len() as f64;
        let c: f64 = p
            .weights()
            .iter()
            .zip(q.weights())
            .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
            .sum::<f64>()
            .sqrt();
        println!(
            "{mix:>6.1} {:>8.4} {raw_rate:>10.3} {:>10.3} {:>10.3}",
            js_divergence(&p, &q)?,
            collision_probability(c, family.bucket_width())?,
            collision_estimate(&sig_p, &family.hash_distribution(&q)?)?
        );
    }
    println!("band rate expected at JS = 0.1: {:.3}", family.band_threshold(0.1)?);
    Ok(())
}

fn normalized(w: &[f64]) -> model_scout::Result<ProbDistribution> {
    let total: f64 = w.iter().sum();
    ProbDistribution::new(w.iter().map(|x| x / total).collect())
}
