//! Flattening a set of partition signatures into one token set, with padding.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::hashing::{digest_bytes, digest_words, mix64};
use crate::jsdlsh::JsdSignature;

/// Real tokens always have this bit clear; padding tokens always have it set.
pub const PAD_BIT: u64 = 1 << 63;
pub const REAL_TOKEN_MASK: u64 = !PAD_BIT;

const FOLD_SEED: u64 = 0x6a09_e667_f3bc_c908;

#[inline]
pub(crate) fn fold_token(band: u32, digest: u64) -> u64 {
    mix64(digest ^ mix64(FOLD_SEED ^ band as u64)) & REAL_TOKEN_MASK
}

/// Namespace for the padding tokens of one model.
pub fn padding_namespace(padding_seed: u64, model_id: &str) -> u64 {
    digest_bytes(padding_seed, model_id.as_bytes())
}

/// Union of the `(band, digest)` tokens of all signatures, plus padding
/// tokens drawn from `namespace` standing in for `n_u - n` missing
/// partitions.
///
/// Each missing partition gets as many padding tokens as an average real
/// partition contributed distinct tokens, so the padding count is
/// `round(real * (n_u - n) / n)`. When no two partitions share a band token
/// this is exactly `(n_u - n) * L`.
///
/// Pass `n_u = sigs.len()` for an unpadded (query-side) flattening.
pub fn flatten(sigs: &[JsdSignature], n_u: usize, namespace: u64) -> Result<BTreeSet<u64>> {
    let n = sigs.len();
    if n > n_u {
        return Err(Error::InvalidParameter(format!(
            "{n} partitions exceed the padding bound {n_u}"
        )));
    }
    let bands = sigs.first().map(JsdSignature::len).unwrap_or(0);
    if sigs.iter().any(|s| s.len() != bands) {
        return Err(Error::SignatureMismatch("signatures with different band counts".into()));
    }
    let mut tokens: BTreeSet<u64> = sigs
        .iter()
        .flat_map(|s| s.tokens().map(|(b, d)| fold_token(b, d)))
        .collect();
    let pad = if n == 0 {
        0
    } else {
        (tokens.len() as f64 * (n_u - n) as f64 / n as f64).round() as u64
    };
    tokens.extend((0..pad).map(|i| PAD_BIT | (digest_words(namespace, [i]) & REAL_TOKEN_MASK)));
    Ok(tokens)
}

/// Exact Jaccard similarity of two token sets.
pub fn token_jaccard(a: &BTreeSet<u64>, b: &BTreeSet<u64>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Jaccard similarity of two sets of partition signatures, treating two
/// signatures as the same element when the Jaccard similarity of their band
/// sets is at least `1 / L`. With `k` shared bands that is `k / (2L - k) >= 1 / L`,
/// i.e. two shared bands for any `L >= 2`.
///
/// Identical signatures collapse first; the matched count `l` is a maximum
/// one-to-one matching, and the result is `l / (n + m - l)`.
pub fn signature_set_jaccard(source: &[JsdSignature], target: &[JsdSignature]) -> f64 {
    let dedup = |sigs: &[JsdSignature]| -> Vec<JsdSignature> {
        let mut seen = HashSet::new();
        sigs.iter().filter(|s| seen.insert((*s).clone())).cloned().collect()
    };
    let source = dedup(source);
    let target = dedup(target);
    if source.is_empty() && target.is_empty() {
        return 0.0;
    }

    // source index -> target indices sharing a band
    let mut by_token: HashMap<(u32, u64), Vec<usize>> = HashMap::new();
    for (j, t) in target.iter().enumerate() {
        for tok in t.tokens() {
            by_token.entry(tok).or_default().push(j);
        }
    }
    let bands = source.first().or(target.first()).map(JsdSignature::len).unwrap_or(0);
    let adjacency: Vec<Vec<usize>> = source
        .iter()
        .map(|s| {
            let mut shared: HashMap<usize, usize> = HashMap::new();
            for j in s.tokens().filter_map(|tok| by_token.get(&tok)).flatten() {
                *shared.entry(*j).or_default() += 1;
            }
            let mut adj: Vec<usize> = shared
                .into_iter()
                .filter(|&(_, k)| k * (bands + 1) >= 2 * bands)
                .map(|(j, _)| j)
                .collect();
            adj.sort_unstable();
            adj
        })
        .collect();

    let mut owner: Vec<Option<usize>> = vec![None; target.len()];
    let mut matched = 0usize;
    for i in 0..source.len() {
        let mut visited = vec![false; target.len()];
        if augment(i, &adjacency, &mut owner, &mut visited) {
            matched += 1;
        }
    }
    matched as f64 / (source.len() + target.len() - matched) as f64
}

fn augment(i: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], visited: &mut [bool]) -> bool {
    for &j in &adj[i] {
        if visited[j] {
            continue;
        }
        visited[j] = true;
        if owner[j].is_none_or(|k| augment(k, adj, owner, visited)) {
            owner[j] = Some(i);
            return true;
        }
    }
    false
}
