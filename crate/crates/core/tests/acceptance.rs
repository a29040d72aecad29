//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture` for
//! representative timings. The lines go straight to stdout so they also
//! show up without `--nocapture`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use model_scout::adaptivity::{
    adaptivity_from_distributions, adaptivity_pairwise, adaptivity_to_jaccard, build_index,
    flatten, jaccard_to_adaptivity, partition, signature_set_jaccard, token_jaccard, IndexConfig,
    IndexInput, ModelSource, PartitionSet,
};
use model_scout::adaptivity::index::AutoOr;
use model_scout::dataio::{fit_binning, to_distribution, BinningScheme, Dataset, ProbDistribution};
use model_scout::evalbench::{
    build_skew_scenarios, pearson, run_benchmark, top_k_error, GaussianClasses, SkewBenchSpec,
    StrategyKind,
};
use model_scout::jsdlsh::{collision_estimate, collision_probability, JsdLshFamily, JsdSignature};
use model_scout::metrics::js_divergence;
use model_scout::minhash::{jaccard_estimate, MinHashFamily};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<(bool, String), String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// Fastest of `n` runs, to keep scheduler noise out of speed ratios.
fn fastest<T>(n: usize, mut f: impl FnMut() -> T) -> (T, Duration) {
    let (mut out, mut best) = timed(&mut f);
    for _ in 1..n {
        let (o, d) = timed(&mut f);
        if d < best {
            best = d;
            out = o;
        }
    }
    (out, best)
}

// ---- independent oracles ------------------------------------------------

/// Plain JS divergence in nats, no smoothing.
fn js_oracle(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: f64, m: f64| if a > 0.0 { a * (a / m).ln() } else { 0.0 };
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let m = 0.5 * (a + b);
            0.5 * kl(a, m) + 0.5 * kl(b, m)
        })
        .sum()
}

/// Concatenated per-dimension equal-width histograms over the min/max of
/// `fit` data.
struct OracleBins {
    bins: usize,
    ranges: Vec<(f64, f64)>,
}

impl OracleBins {
    fn fit(data: &[&Dataset], bins: usize) -> Self {
        let dims = data[0].n_dims();
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); dims];
        for ds in data {
            for row in ds.rows() {
                for (r, &v) in ranges.iter_mut().zip(row) {
                    *r = (r.0.min(v), r.1.max(v));
                }
            }
        }
        OracleBins { bins, ranges }
    }

    fn histogram(&self, data: &Dataset, rows: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.ranges.len() * self.bins];
        for &r in rows {
            for (d, (&v, &(lo, hi))) in data.row(r).iter().zip(&self.ranges).enumerate() {
                let b = ((v - lo) / (hi - lo) * self.bins as f64).floor().clamp(0.0, (self.bins - 1) as f64);
                h[d * self.bins + b as usize] += 1.0;
            }
        }
        let total: f64 = h.iter().sum();
        h.iter().map(|c| c / total).collect()
    }
}

fn adaptivity_oracle(source: &[Vec<f64>], target: &[Vec<f64>], t: f64) -> f64 {
    let hit = target
        .iter()
        .filter(|q| source.iter().any(|p| js_oracle(p, q) <= t))
        .count();
    hit as f64 / target.len() as f64
}

/// Spearman correlation with average ranks for ties.
fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn dist(w: Vec<f64>) -> ProbDistribution {
    let total: f64 = w.iter().sum();
    ProbDistribution::new(w.iter().map(|x| x / total).collect()).unwrap()
}

/// Class counts drawn around `weights`, summing to `rows`.
fn counts_for(weights: &[f64], rows: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = weights.iter().map(|w| (w * rows as f64).floor() as usize).collect();
    let short = rows - counts.iter().sum::<usize>();
    for c in counts.iter_mut().take(short) {
        *c += 1;
    }
    counts
}

// ---- criteria -----------------------------------------------------------

fn minhash_accuracy() -> Outcome {
    let (mae, elapsed) = timed(|| {
        let family = MinHashFamily::new(7, 256, 128).unwrap();
        let mut rng = rng(1);
        let mut total = 0.0;
        for i in 0..100 {
            let planted = (i % 9 + 1) as f64 / 10.0;
            let union = 400usize;
            let shared = (planted * union as f64).round() as usize;
            let tokens: Vec<u64> = {
                let mut seen = HashSet::new();
                std::iter::repeat_with(|| rng.random::<u64>())
                    .filter(|t| seen.insert(*t))
                    .take(union)
                    .collect()
            };
            let only_a = (union - shared) / 2;
            let a: Vec<u64> = tokens[..shared + only_a].to_vec();
            let b: Vec<u64> = tokens[..shared].iter().chain(&tokens[shared + only_a..]).copied().collect();
            let truth = shared as f64 / union as f64;
            let est = jaccard_estimate(
                &family.minhash_set(&a).unwrap(),
                &family.minhash_set(&b).unwrap(),
            )
            .unwrap();
            total += (est - truth).abs();
        }
        total / 100.0
    });
    Ok((
        mae <= 0.05 && elapsed < Duration::from_secs(10),
        format!("MAE {mae:.4} (<= 0.05), {:.2}s (< 10s)", elapsed.as_secs_f64()),
    ))
}

fn jsd_lsh_sensitivity() -> Outcome {
    let ((rho, zero_ok), elapsed) = timed(|| {
        let omega = 40;
        let family = JsdLshFamily::new(3, 800, 200, 1.4, omega).unwrap();
        let mut rng = rng(2);
        let mut exact = Vec::new();
        let mut est = Vec::new();
        for _ in 0..200 {
            let p = random_distribution(&mut rng, omega);
            let r = random_distribution(&mut rng, omega);
            let lambda: f64 = rng.random_range(0.0..1.0);
            let q: Vec<f64> = p.iter().zip(&r).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
            let (p, q) = (dist(p), dist(q));
            exact.push(js_divergence(&p, &q).unwrap());
            est.push(
                collision_estimate(
                    &family.hash_distribution(&p).unwrap(),
                    &family.hash_distribution(&q).unwrap(),
                )
                .unwrap(),
            );
        }

        // same rows in a different order give the same histogram
        let classes = GaussianClasses::new(4, 10, 3.0, 1.0, 5).unwrap();
        let mut zero_ok = true;
        for s in 0..20 {
            let ds = classes.sample("z", &[60, 20, 10, 10], s).unwrap();
            let binning = fit_binning(&[&ds], 4).unwrap();
            let mut order: Vec<usize> = (0..ds.n_rows()).collect();
            order.shuffle(&mut rng);
            let shuffled = ds.select("z2", &order).unwrap();
            let (p, q) = (to_distribution(&ds, &binning).unwrap(), to_distribution(&shuffled, &binning).unwrap());
            zero_ok &= js_divergence(&p, &q).unwrap() == 0.0
                && family.raw_hashes(&p).unwrap() == family.raw_hashes(&q).unwrap();
        }
        (spearman(&exact, &est), zero_ok)
    });
    Ok((
        rho <= -0.8 && zero_ok && elapsed < Duration::from_secs(30),
        format!(
            "Spearman {rho:.3} (<= -0.8), zero-divergence raw collisions {}, {:.2}s (< 30s)",
            if zero_ok { "100%" } else { "below 100%" },
            elapsed.as_secs_f64()
        ),
    ))
}

fn collision_curve() -> Outcome {
    let r = 1.4;
    let samples = 100_000;
    let mut rng = rng(3);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for c in [0.5, 1.0, 2.0] {
        // two points at distance c in R^3, hashed by ceil((a.x + b) / r)
        let mut hits = 0usize;
        for _ in 0..samples {
            let dir: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + c * d / norm).collect();
            let a: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            let b = rng.random_range(0.0..r);
            let h = |v: &[f64]| ((a.iter().zip(v).map(|(p, q)| p * q).sum::<f64>() + b) / r).ceil();
            if h(&x) == h(&y) {
                hits += 1;
            }
        }
        let mc = hits as f64 / samples as f64;
        let curve = collision_probability(c, r).map_err(|e| e.to_string())?;
        worst = worst.max((mc - curve).abs());
        parts.push(format!("c={c}: curve {curve:.4} vs MC {mc:.4}"));
    }

    // the library's own hash functions, on sqrt-histograms at distance c
    for c in [0.5f64, 1.0] {
        let theta = 0.1;
        let phi = theta + 2.0 * (c / 2.0).asin();
        let p = dist(vec![theta.cos().powi(2), theta.sin().powi(2)]);
        let q = dist(vec![phi.cos().powi(2), phi.sin().powi(2)]);
        let family = JsdLshFamily::new(11, samples, 1000, r, 2).map_err(|e| e.to_string())?;
        let (hp, hq) = (family.raw_hashes(&p).unwrap(), family.raw_hashes(&q).unwrap());
        let rate = hp.iter().zip(&hq).filter(|(a, b)| a == b).count() as f64 / samples as f64;
        let curve = collision_probability(c, r).unwrap();
        worst = worst.max((rate - curve).abs());
        parts.push(format!("family c={c}: {rate:.4}"));
    }
    Ok((worst <= 2e-2, format!("max |diff| {worst:.4} (<= 0.02); {}", parts.join(", "))))
}

fn screening() -> Outcome {
    let t = 0.1;
    let n_datasets = 100;
    let classes = GaussianClasses::new(6, 4, 8.0, 1.0, 21).unwrap();
    let mut rng = rng(4);
    // sharpened mixtures, so prototypes sit far apart and jittered copies cluster
    let prototypes: Vec<Vec<f64>> = (0..12)
        .map(|_| dist(random_distribution(&mut rng, 6).iter().map(|w| w.powi(3)).collect()).weights().to_vec())
        .collect();
    let datasets: Vec<Dataset> = (0..n_datasets)
        .map(|i| {
            let proto = &prototypes[i % prototypes.len()];
            let jitter: f64 = rng.random_range(0.0..0.2);
            let noise = random_distribution(&mut rng, 6);
            let w: Vec<f64> = proto.iter().zip(&noise).map(|(p, n)| (1.0 - jitter) * p + jitter * n).collect();
            classes.sample(format!("d{i}"), &counts_for(&w, 2000), 100 + i as u64).unwrap()
        })
        .collect();
    let refs: Vec<&Dataset> = datasets.iter().collect();
    let binning = fit_binning(&refs, 16).unwrap();
    let dists: Vec<ProbDistribution> = datasets.iter().map(|d| to_distribution(d, &binning).unwrap()).collect();
    let pairs: Vec<(usize, usize)> = (0..n_datasets)
        .flat_map(|i| (i + 1..n_datasets).map(move |j| (i, j)))
        .collect();

    let (truth, exact_time) = fastest(3, || {
        pairs
            .iter()
            .map(|&(i, j)| js_divergence(&dists[i], &dists[j]).unwrap() <= t)
            .collect::<Vec<bool>>()
    });

    let family = JsdLshFamily::new(9, 120, 40, 1.4, binning.omega_size()).unwrap();
    let cutoff = family.band_threshold(t).unwrap();
    let (predicted, lsh_time) = fastest(3, || {
        let sigs: Vec<JsdSignature> = dists.iter().map(|p| family.hash_distribution(p).unwrap()).collect();
        pairs
            .iter()
            .map(|&(i, j)| collision_estimate(&sigs[i], &sigs[j]).unwrap() >= cutoff)
            .collect::<Vec<bool>>()
    });

    let tp = truth.iter().zip(&predicted).filter(|(a, b)| **a && **b).count() as f64;
    let positives = truth.iter().filter(|a| **a).count() as f64;
    let flagged = predicted.iter().filter(|b| **b).count() as f64;
    let precision = if flagged > 0.0 { tp / flagged } else { 0.0 };
    let recall = if positives > 0.0 { tp / positives } else { 0.0 };
    let ratio = lsh_time.as_secs_f64() / exact_time.as_secs_f64();
    Ok((
        precision >= 0.9 && recall >= 0.8 && ratio <= 0.2,
        format!(
            "precision {precision:.3} (>= 0.9), recall {recall:.3} (>= 0.8), {positives} similar pairs of {}, \
             LSH/exact time {ratio:.3} (<= 0.2; {:.1}ms vs {:.1}ms)",
            pairs.len(),
            lsh_time.as_secs_f64() * 1e3,
            exact_time.as_secs_f64() * 1e3
        ),
    ))
}

/// Rows of each class in contiguous blocks of `block` rows.
fn blocked(classes: &GaussianClasses, id: &str, per_class: &[usize], seed: u64) -> Dataset {
    let n = classes.n_classes();
    let parts: Vec<Dataset> = per_class
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(c, &k)| {
            let mut counts = vec![0; n];
            counts[c] = k;
            classes.sample(format!("{id}-{c}"), &counts, seed + c as u64).unwrap()
        })
        .collect();
    let refs: Vec<&Dataset> = parts.iter().collect();
    Dataset::concat(id, &refs).unwrap()
}

fn asymmetry() -> Outcome {
    let t = 0.1;
    let classes = GaussianClasses::new(4, 3, 5.0, 0.5, 31).unwrap();
    let superset = blocked(&classes, "superset", &[200, 200, 200, 200], 10);
    let subset = blocked(&classes, "subset", &[200, 200, 0, 0], 20);
    let binning = fit_binning(&[&superset, &subset], 10).unwrap();
    let sup = PartitionSet::contiguous(&superset, 50).unwrap();
    let sub = PartitionSet::contiguous(&subset, 50).unwrap();

    let down = adaptivity_pairwise((&sup, &superset), (&sub, &subset), t, &binning).unwrap();
    let up = adaptivity_pairwise((&sub, &subset), (&sup, &superset), t, &binning).unwrap();

    let bins = OracleBins::fit(&[&superset, &subset], 10);
    let hists = |p: &PartitionSet, d: &Dataset| -> Vec<Vec<f64>> {
        p.blocks().iter().map(|b| bins.histogram(d, b)).collect()
    };
    let (hs, ht) = (hists(&sup, &superset), hists(&sub, &subset));
    let oracle_down = adaptivity_oracle(&hs, &ht, t);
    let oracle_up = adaptivity_oracle(&ht, &hs, t);
    let agree = down == oracle_down && up == oracle_up;
    Ok((
        down >= 0.9 && up <= 0.6 && agree,
        format!(
            "superset->subset {down:.3} (>= 0.9), subset->superset {up:.3} (<= 0.6), oracle {oracle_down:.3}/{oracle_up:.3} {}",
            if agree { "agrees" } else { "DISAGREES" }
        ),
    ))
}

fn conversions() -> Outcome {
    let mut worst: f64 = 0.0;
    for ai in 1..=9 {
        let a = ai as f64 / 10.0;
        for n in 1..=5 {
            for m in 1..=5 {
                let j = adaptivity_to_jaccard(a, n, m).map_err(|e| e.to_string())?;
                let expected = a / (n as f64 / m as f64 + 1.0 - a);
                let back = jaccard_to_adaptivity(j, n, m).map_err(|e| e.to_string())?;
                worst = worst.max((j - expected).abs()).max((back - a).abs());
            }
        }
    }
    let third = adaptivity_to_jaccard(0.5, 4, 4).unwrap();
    let third_ok = (third - 1.0 / 3.0).abs() <= 1e-12;
    Ok((
        worst <= 1e-12 && third_ok,
        format!("max round-trip error {worst:.1e} (<= 1e-12) over 225 points; a=0.5, n=m gives {third:.15}"),
    ))
}

/// Exact set-level Jaccard by brute-force maximum matching: two
/// signatures count as the same element when their band sets have Jaccard
/// similarity of at least 1/L.
fn set_jaccard_oracle(a: &[JsdSignature], b: &[JsdSignature]) -> f64 {
    fn dedup(v: &[JsdSignature]) -> Vec<&JsdSignature> {
        let mut out: Vec<&JsdSignature> = Vec::new();
        for s in v {
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }
    fn best(i: usize, a: &[&JsdSignature], b: &[&JsdSignature], used: &mut Vec<bool>) -> usize {
        if i == a.len() {
            return 0;
        }
        let mut top = best(i + 1, a, b, used);
        for j in 0..b.len() {
            let bands = a[i].len() as f64;
            let shared = a[i].digests().iter().zip(b[j].digests()).filter(|(x, y)| x == y).count() as f64;
            let linked = shared / (2.0 * bands - shared) >= 1.0 / bands - 1e-12;
            if !used[j] && linked {
                used[j] = true;
                top = top.max(1 + best(i + 1, a, b, used));
                used[j] = false;
            }
        }
        top
    }
    let (a, b) = (dedup(a), dedup(b));
    let l = best(0, &a, &b, &mut vec![false; b.len()]);
    l as f64 / (a.len() + b.len() - l) as f64
}

fn flattening_bound() -> Outcome {
    let mut rng = rng(7);
    let mut violations = 0;
    let mut oracle_mismatch = 0;
    let mut nonzero = 0;
    for _ in 0..50 {
        let bands = rng.random_range(2..=6);
        let n = rng.random_range(1..=5);
        let m = rng.random_range(1..=5);
        let source: Vec<JsdSignature> = (0..n)
            .map(|_| JsdSignature::from_digests((0..bands).map(|_| rng.random()).collect()))
            .collect();
        // targets copy some bands from a random source, or are fresh
        let target: Vec<JsdSignature> = (0..m)
            .map(|_| {
                let donor = &source[rng.random_range(0..n)];
                let copy = rng.random_bool(0.7);
                JsdSignature::from_digests(
                    (0..bands)
                        .map(|k| if copy && rng.random_bool(0.6) { donor.digests()[k] } else { rng.random() })
                        .collect(),
                )
            })
            .collect();
        let set_j = set_jaccard_oracle(&source, &target);
        if (signature_set_jaccard(&source, &target) - set_j).abs() > 1e-12 {
            oracle_mismatch += 1;
        }
        let fa = flatten(&source, n, 1).unwrap();
        let fb = flatten(&target, m, 2).unwrap();
        let tok_j = token_jaccard(&fa, &fb);
        if set_j > 0.0 {
            nonzero += 1;
        }
        if set_j > bands as f64 * tok_j + 1e-9 {
            violations += 1;
        }
    }
    Ok((
        violations == 0 && oracle_mismatch == 0,
        format!("{violations} violations over 50 instances ({nonzero} with overlap), {oracle_mismatch} set-Jaccard oracle mismatches"),
    ))
}

struct Corpus {
    models: Vec<Dataset>,
    target: Dataset,
}

fn mixture_corpus(seed: u64, n_models: usize) -> Corpus {
    let classes = GaussianClasses::new(5, 4, 3.0, 1.0, seed).unwrap();
    let mut rng = rng(seed);
    let weights: Vec<Vec<f64>> = (0..n_models).map(|_| random_distribution(&mut rng, 5)).collect();
    let models = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let rows = 50 * rng.random_range(19..=21);
            classes.sample(format!("m{i:03}"), &counts_for(w, rows), seed * 1000 + i as u64).unwrap()
        })
        .collect();
    let pick = rng.random_range(0..n_models);
    let target = classes.sample("target", &counts_for(&weights[pick], 1000), seed * 1000 + 999).unwrap();
    Corpus { models, target }
}

fn index_config(seed: u64) -> IndexConfig {
    IndexConfig {
        partition_size: 50,
        seed,
        ..IndexConfig::default()
    }
}

/// Best pairwise-adaptivity models (all ties) and the wall time of
/// scoring every model against the target from cached source histograms.
fn pairwise_top(
    corpus: &Corpus,
    sources: &[Vec<ProbDistribution>],
    config: &IndexConfig,
    binning: &BinningScheme,
) -> (BTreeSet<String>, Duration) {
    let (scores, elapsed) = timed(|| {
        let tp = partition(&corpus.target, config.partition_size, config.seeds().shuffle).unwrap();
        let target = tp.distributions(&corpus.target, binning).unwrap();
        sources
            .iter()
            .map(|s| adaptivity_from_distributions(s, &target, config.js_threshold).unwrap())
            .collect::<Vec<f64>>()
    });
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ids = corpus
        .models
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s == top)
        .map(|(m, _)| m.id().to_string())
        .collect();
    (ids, elapsed)
}

fn source_histograms(corpus: &Corpus, config: &IndexConfig, binning: &BinningScheme) -> Vec<Vec<ProbDistribution>> {
    corpus
        .models
        .iter()
        .map(|m| {
            partition(m, config.partition_size, config.seeds().shuffle)
                .unwrap()
                .distributions(m, binning)
                .unwrap()
        })
        .collect()
}

fn index_vs_pairwise() -> Outcome {
    let t_prime = 0.5;
    let mut agree = 0;
    for seed in 1..=20u64 {
        let corpus = mixture_corpus(seed, 20);
        let config = index_config(seed);
        let refs: Vec<&Dataset> = corpus.models.iter().collect();
        let binning = fit_binning(&refs, 10).unwrap();
        let inputs: Vec<IndexInput> = corpus
            .models
            .iter()
            .map(|m| IndexInput { id: m.id(), source: ModelSource::Data(m), source_accuracy: None })
            .collect();
        let index = build_index(&inputs, &config, &binning).unwrap();
        let result = index.query(&corpus.target, t_prime).unwrap();
        let index_top = result
            .fractions
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(id, _)| id.clone());
        let sources = source_histograms(&corpus, &config, &binning);
        let (best, _) = pairwise_top(&corpus, &sources, &config, &binning);
        if index_top.is_some_and(|id| best.contains(&id)) {
            agree += 1;
        }
    }

    let corpus = mixture_corpus(99, 100);
    let config = index_config(99);
    let refs: Vec<&Dataset> = corpus.models.iter().collect();
    let binning = fit_binning(&refs, 10).unwrap();
    let inputs: Vec<IndexInput> = corpus
        .models
        .iter()
        .map(|m| IndexInput { id: m.id(), source: ModelSource::Data(m), source_accuracy: None })
        .collect();
    let index = build_index(&inputs, &config, &binning).unwrap();
    let sources = source_histograms(&corpus, &config, &binning);
    let (_, pairwise_time) = fastest(15, || pairwise_top(&corpus, &sources, &config, &binning).1);
    let (_, index_time) = fastest(15, || index.query(&corpus.target, t_prime).unwrap());
    let ratio = index_time.as_secs_f64() / pairwise_time.as_secs_f64();

    let share = agree as f64 / 20.0;
    Ok((
        share >= 0.8 && ratio <= 0.2,
        format!(
            "top-1 agreement {agree}/20 (>= 16), index/pairwise query time on 100 models {ratio:.3} (<= 0.2; {:.1}ms vs {:.1}ms)",
            index_time.as_secs_f64() * 1e3,
            pairwise_time.as_secs_f64() * 1e3
        ),
    ))
}

fn threshold_cap() -> Outcome {
    let classes = GaussianClasses::new(3, 2, 3.0, 1.0, 41).unwrap();
    let models: Vec<Dataset> = (0..4)
        .map(|i| classes.sample(format!("m{i}"), &[40 + 20 * i, 40, 40], i as u64).unwrap())
        .collect();
    let target = models[0].select("target", &(0..100).collect::<Vec<_>>()).unwrap();
    let config = IndexConfig {
        partition_size: 20,
        jsd_hashes: 8,
        jsd_bands: AutoOr::Fixed(4),
        padding: AutoOr::Fixed(10),
        minwise_hashes: 64,
        minwise_bands: 32,
        ..IndexConfig::default()
    };
    let refs: Vec<&Dataset> = models.iter().collect();
    let binning = fit_binning(&refs, 6).unwrap();
    let inputs: Vec<IndexInput> = models
        .iter()
        .map(|m| IndexInput { id: m.id(), source: ModelSource::Data(m), source_accuracy: None })
        .collect();
    let index = build_index(&inputs, &config, &binning).map_err(|e| e.to_string())?;
    let q = index.query(&target, 0.6).map_err(|e| e.to_string())?;
    let cap = 31.0 / 32.0;
    let fractions_ok = !q.fractions.is_empty() && q.fractions.values().all(|f| (0.0..=1.0).contains(f));
    let matched_ok = q.matched.iter().all(|id| q.fractions[id] > cap);
    Ok((
        q.target_partitions == 5 && q.raw_threshold == 1.0 && q.effective_threshold == cap && fractions_ok && matched_ok,
        format!(
            "m = {}, t* = {} (== 1.0), effective {} (cap 31/32), {} raw fractions returned",
            q.target_partitions,
            q.raw_threshold,
            q.effective_threshold,
            q.fractions.len()
        ),
    ))
}

fn evaluation_metrics() -> Outcome {
    let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 2.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
    let r = pearson(&xs, &ys).map_err(|e| e.to_string())?;
    let prediction: BTreeSet<String> = ["B", "C", "D"].iter().map(|s| s.to_string()).collect();
    let err = top_k_error(&[prediction], &["C"], 3).map_err(|e| e.to_string())?;
    Ok((
        (r - 1.0).abs() <= 1e-12 && err == 0.0,
        format!("pearson(x, 2x+1) = {r:.15}; truth C in {{B,C,D}} at k=3 gives error {err}"),
    ))
}

fn end_to_end() -> Outcome {
    let spec = SkewBenchSpec::default();
    let run = || -> Result<(String, BTreeMap<&'static str, Option<String>>), String> {
        let scenarios = build_skew_scenarios(&spec).map_err(|e| e.to_string())?;
        let report = run_benchmark(&scenarios, &spec.strategies, &spec.bench_config()).map_err(|e| e.to_string())?;
        let mut tops = BTreeMap::new();
        for kind in [StrategyKind::Adaptivity, StrategyKind::Js, StrategyKind::L2] {
            let top = report
                .outcome("target-balanced", kind)
                .and_then(|o| o.ranking.as_ref())
                .and_then(|r| r.entries.first())
                .map(|e| e.id.clone());
            tops.insert(kind.name(), top);
        }
        Ok((report.rankings_json().map_err(|e| e.to_string())?, tops))
    };
    let (first, elapsed) = timed(run);
    let (rankings, tops) = first?;
    let (again, _) = run()?;
    let all_top = tops.values().all(|t| t.as_deref() == Some("balanced"));
    let identical = rankings == again;
    let shown: Vec<String> = tops
        .iter()
        .map(|(k, v)| format!("{k}: {}", v.as_deref().unwrap_or("none")))
        .collect();
    Ok((
        all_top && identical && elapsed < Duration::from_secs(120),
        format!(
            "balanced target top-1 [{}], run {:.1}s (< 120s), rerun rankings {}",
            shown.join(", "),
            elapsed.as_secs_f64(),
            if identical { "byte-identical" } else { "DIFFER" }
        ),
    ))
}

fn determinism() -> Outcome {
    let corpus = mixture_corpus(5, 10);
    let config = index_config(1234);
    let refs: Vec<&Dataset> = corpus.models.iter().collect();
    let binning = fit_binning(&refs, 10).unwrap();
    let inputs: Vec<IndexInput> = corpus
        .models
        .iter()
        .map(|m| IndexInput { id: m.id(), source: ModelSource::Data(m), source_accuracy: None })
        .collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let index = build_index(&inputs, &config, &binning).map_err(|e| e.to_string())?;
        let out = dir.path().join(run);
        index.save(&out).map_err(|e| e.to_string())?;
        files.push(std::fs::read(out.join("tables.jsonl")).map_err(|e| e.to_string())?);
    }
    let same = files[0] == files[1] && !files[0].is_empty();
    Ok((same, format!("tables.jsonl {} ({} bytes)", if same { "byte-identical" } else { "DIFFERS" }, files[0].len())))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("minhash estimator accuracy", minhash_accuracy),
        ("JSD-LSH sensitivity", jsd_lsh_sensitivity),
        ("collision curve fidelity", collision_curve),
        ("LSH vs exact JS screening", screening),
        ("adaptivity asymmetry", asymmetry),
        ("conversion identities", conversions),
        ("flattening bound", flattening_bound),
        ("two-level index vs pairwise", index_vs_pairwise),
        ("threshold cap", threshold_cap),
        ("evaluation metrics", evaluation_metrics),
        ("end-to-end skewed benchmark", end_to_end),
        ("index determinism", determinism),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        writeln!(out, "{} {:>2}. {name}: {detail}", if pass { "PASS" } else { "FAIL" }, i + 1).unwrap();
        out.flush().unwrap();
        if !pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
