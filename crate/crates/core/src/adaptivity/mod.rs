//! The asymmetric adaptivity metric.
//!
//! Adaptivity of a source dataset to a target dataset is the fraction of
//! target partitions that have at least one source partition within JS
//! divergence `t`. The exact pairwise computation lives here; the two-level
//! LSH index that approximates it lives in [`index`].

mod flatten;
pub mod index;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use flatten::{
    flatten, padding_namespace, signature_set_jaccard, token_jaccard, PAD_BIT, REAL_TOKEN_MASK,
};
pub use index::{
    build_index, BandSetting, IndexConfig, IndexInput, ModelSource, PaddingBound, QueryResult,
    TwoLevelIndex, INDEX_FORMAT_VERSION,
};

use crate::dataio::{rows_to_distribution, BinningScheme, Dataset, ProbDistribution};
use crate::error::{Error, Result};
use crate::jsdlsh::{JsdLshFamily, JsdSignature};
use crate::metrics::js_divergence;

/// Row blocks of one dataset. All blocks but the last hold exactly
/// `partition_size` rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSet {
    dataset_id: String,
    partition_size: usize,
    seed: Option<u64>,
    blocks: Vec<Vec<usize>>,
}

/// Shuffles rows with a seeded permutation and chunks them into blocks of
/// `partition_size`.
pub fn partition(data: &Dataset, partition_size: usize, seed: u64) -> Result<PartitionSet> {
    if partition_size == 0 {
        return Err(Error::InvalidParameter("partition size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(PartitionSet {
        dataset_id: data.id().to_string(),
        partition_size,
        seed: Some(seed),
        blocks: order.chunks(partition_size).map(<[usize]>::to_vec).collect(),
    })
}

impl PartitionSet {
    /// Blocks of consecutive rows, no shuffling.
    pub fn contiguous(data: &Dataset, partition_size: usize) -> Result<Self> {
        if partition_size == 0 {
            return Err(Error::InvalidParameter("partition size must be at least 1".into()));
        }
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        Ok(PartitionSet {
            dataset_id: data.id().to_string(),
            partition_size,
            seed: None,
            blocks: rows.chunks(partition_size).map(<[usize]>::to_vec).collect(),
        })
    }

    /// Explicit blocks, checked against the partition invariants.
    pub fn from_blocks(data: &Dataset, partition_size: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if partition_size == 0 || blocks.is_empty() {
            return Err(Error::InvalidParameter("need a positive size and at least one block".into()));
        }
        let mut seen = vec![false; data.n_rows()];
        for (i, block) in blocks.iter().enumerate() {
            let last = i + 1 == blocks.len();
            if block.is_empty()
                || block.len() > partition_size
                || (!last && block.len() != partition_size)
            {
                return Err(Error::InvalidParameter(format!(
                    "block {i} has {} rows (partition size {partition_size})",
                    block.len()
                )));
            }
            for &r in block {
                if r >= seen.len() || std::mem::replace(&mut seen[r], true) {
                    return Err(Error::InvalidParameter(format!(
                        "row {r} is out of range or repeated"
                    )));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidParameter("blocks do not cover every row".into()));
        }
        Ok(PartitionSet {
            dataset_id: data.id().to_string(),
            partition_size,
            seed: None,
            blocks,
        })
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn partition_size(&self) -> usize {
        self.partition_size
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// One histogram per block under the shared binning.
    pub fn distributions(&self, data: &Dataset, binning: &BinningScheme) -> Result<Vec<ProbDistribution>> {
        self.blocks
            .iter()
            .map(|b| rows_to_distribution(data, b.iter().copied(), binning))
            .collect()
    }

    /// One JSD-LSH signature per block.
    pub fn signatures(
        &self,
        data: &Dataset,
        binning: &BinningScheme,
        family: &JsdLshFamily,
    ) -> Result<Vec<JsdSignature>> {
        family.hash_distributions(&self.distributions(data, binning)?)
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t < std::f64::consts::LN_2) {
        return Err(Error::InvalidParameter(format!("JS threshold {t} outside (0, ln 2)")));
    }
    Ok(())
}

/// Exact adaptivity of `source` to `target`: the share of target partitions
/// that have some source partition within JS divergence `t`.
pub fn adaptivity_pairwise(
    source: (&PartitionSet, &Dataset),
    target: (&PartitionSet, &Dataset),
    t: f64,
    binning: &BinningScheme,
) -> Result<f64> {
    check_threshold(t)?;
    let source_dists = source.0.distributions(source.1, binning)?;
    let target_dists = target.0.distributions(target.1, binning)?;
    adaptivity_from_distributions(&source_dists, &target_dists, t)
}

/// Same as [`adaptivity_pairwise`] over precomputed partition histograms.
pub fn adaptivity_from_distributions(
    source: &[ProbDistribution],
    target: &[ProbDistribution],
    t: f64,
) -> Result<f64> {
    check_threshold(t)?;
    if target.is_empty() {
        return Err(Error::InvalidParameter("target has no partitions".into()));
    }
    let mut matched = 0usize;
    for q in target {
        for p in source {
            if js_divergence(p, q)? <= t {
                matched += 1;
                break;
            }
        }
    }
    Ok(matched as f64 / target.len() as f64)
}

fn check_counts(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("partition counts must be at least 1".into()));
    }
    Ok(())
}

/// Jaccard similarity of partition sets implied by adaptivity `a`, with `n`
/// source and `m` target partitions: `a / (n/m + 1 - a)`. Exceeds 1 when
/// `a * m > n`, which no real pair of partition sets can reach; the value is
/// kept so the conversion stays invertible.
pub fn adaptivity_to_jaccard(a: f64, n: usize, m: usize) -> Result<f64> {
    check_counts(n, m)?;
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::InvalidParameter(format!("adaptivity {a} outside [0, 1]")));
    }
    Ok(a / (n as f64 / m as f64 + 1.0 - a))
}

/// Inverse of [`adaptivity_to_jaccard`]: `j (n/m + 1) / (1 + j)`.
pub fn jaccard_to_adaptivity(j: f64, n: usize, m: usize) -> Result<f64> {
    check_counts(n, m)?;
    if !(j >= 0.0 && j.is_finite()) {
        return Err(Error::InvalidParameter(format!("jaccard {j} must be finite and non-negative")));
    }
    Ok(j * (n as f64 / m as f64 + 1.0) / (1.0 + j))
}

/// Minwise band-match threshold for adaptivity threshold `t_prime`:
/// `L * t' / (n_u/m + 1 - t')`. Can exceed 1.
pub fn minwise_threshold(jsd_bands: usize, t_prime: f64, n_u: usize, m: usize) -> Result<f64> {
    check_counts(n_u, m)?;
    if !(t_prime > 0.0 && t_prime <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "adaptivity threshold {t_prime} outside (0, 1]"
        )));
    }
    Ok(jsd_bands as f64 * t_prime / (n_u as f64 / m as f64 + 1.0 - t_prime))
}
