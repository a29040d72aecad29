//! Minwise hashing over sets of 64-bit tokens.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{derive_seed, digest_words, mix64};

pub const DEFAULT_MINWISE_HASHES: usize = 256;
pub const DEFAULT_MINWISE_BANDS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashManifest {
    pub seed: u64,
    #[serde(rename = "K_m")]
    pub hashes: usize,
    #[serde(rename = "L_m")]
    pub bands: usize,
}

/// `K_m` seeded mixing functions, grouped into `L_m` bands.
#[derive(Debug, Clone)]
pub struct MinHashFamily {
    manifest: MinHashManifest,
    fn_seeds: Vec<u64>,
    digest_seed: u64,
}

impl MinHashFamily {
    pub fn new(seed: u64, hashes: usize, bands: usize) -> Result<Self> {
        if hashes == 0 || bands == 0 || hashes % bands != 0 {
            return Err(Error::InvalidParameter(format!(
                "K_m={hashes} must be a positive multiple of L_m={bands}"
            )));
        }
        let base = derive_seed(seed, "minwise-functions");
        let fn_seeds = (0..hashes as u64)
            .map(|i| mix64(base.wrapping_add(i.wrapping_mul(0x9e37_79b9_7f4a_7c15))))
            .collect();
        Ok(MinHashFamily {
            manifest: MinHashManifest {
                seed,
                hashes,
                bands,
            },
            fn_seeds,
            digest_seed: derive_seed(seed, "minwise-band-digest"),
        })
    }

    pub fn from_manifest(m: &MinHashManifest) -> Result<Self> {
        MinHashFamily::new(m.seed, m.hashes, m.bands)
    }

    pub fn manifest(&self) -> MinHashManifest {
        self.manifest
    }

    pub fn hashes(&self) -> usize {
        self.manifest.hashes
    }

    pub fn bands(&self) -> usize {
        self.manifest.bands
    }

    /// Signature of a token set. Order and multiplicity of `tokens` are
    /// irrelevant.
    pub fn minhash_set<I>(&self, tokens: I) -> Result<MinSignature>
    where
        I: IntoIterator,
        I::Item: std::borrow::Borrow<u64>,
    {
        let premixed: Vec<u64> = tokens
            .into_iter()
            .map(|t| mix64(*std::borrow::Borrow::<u64>::borrow(&t)))
            .collect();
        if premixed.is_empty() {
            return Err(Error::InvalidParameter("cannot minhash an empty token set".into()));
        }
        let mut values = vec![u64::MAX; self.manifest.hashes];
        fold_minima(&premixed, &self.fn_seeds, &mut values);
        let rows = self.manifest.hashes / self.manifest.bands;
        let bands = values
            .chunks_exact(rows)
            .map(|chunk| digest_words(self.digest_seed, chunk.iter().copied()))
            .collect();
        Ok(MinSignature {
            seed: self.manifest.seed,
            values,
            bands,
        })
    }
}

/// Lowers `values[f]` to the smallest `permute(t ^ seeds[f])` over `tokens`.
fn fold_minima(tokens: &[u64], seeds: &[u64], values: &mut [u64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime
        return unsafe { fold_minima_avx2(tokens, seeds, values) };
    }
    fold_minima_portable(tokens, seeds, values)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn fold_minima_avx2(tokens: &[u64], seeds: &[u64], values: &mut [u64]) {
    fold_minima_portable(tokens, seeds, values)
}

#[inline(always)]
fn fold_minima_portable(tokens: &[u64], seeds: &[u64], values: &mut [u64]) {
    // four tokens per pass over the functions
    let mut quads = tokens.chunks_exact(4);
    for q in &mut quads {
        for (v, &s) in values.iter_mut().zip(seeds) {
            let h = permute(q[0] ^ s)
                .min(permute(q[1] ^ s))
                .min(permute(q[2] ^ s).min(permute(q[3] ^ s)));
            if h < *v {
                *v = h;
            }
        }
    }
    for &t in quads.remainder() {
        for (v, &s) in values.iter_mut().zip(seeds) {
            let h = permute(t ^ s);
            if h < *v {
                *v = h;
            }
        }
    }
}

/// One function of the family applied to an already mixed token. Tokens
/// are mixed once, so each function only costs a multiply.
#[inline]
fn permute(z: u64) -> u64 {
    let z = z.wrapping_mul(0xd6e8_feb8_6659_fd93);
    z ^ (z >> 32)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinSignature {
    seed: u64,
    #[serde(with = "decimal_vec")]
    values: Vec<u64>,
    #[serde(with = "indexed_decimal_vec")]
    bands: Vec<u64>,
}

impl MinSignature {
    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn bands(&self) -> &[u64] {
        &self.bands
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Fraction of agreeing minimum values.
pub fn jaccard_estimate(a: &MinSignature, b: &MinSignature) -> Result<f64> {
    if a.seed != b.seed || a.values.len() != b.values.len() || a.bands.len() != b.bands.len() {
        return Err(Error::SignatureMismatch(
            "MinHash signatures come from different families".into(),
        ));
    }
    let hits = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(hits as f64 / a.values.len() as f64)
}

/// Fraction of agreeing band digests.
pub fn band_match_fraction(a: &MinSignature, b: &MinSignature) -> Result<f64> {
    if a.seed != b.seed || a.bands.len() != b.bands.len() {
        return Err(Error::SignatureMismatch(
            "MinHash signatures come from different families".into(),
        ));
    }
    let hits = a.bands.iter().zip(&b.bands).filter(|(x, y)| x == y).count();
    Ok(hits as f64 / a.bands.len() as f64)
}

mod decimal_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u64>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|x| x.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

mod indexed_decimal_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().enumerate().map(|(i, x)| (i, x.to_string())))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u64>, D::Error> {
        let pairs = Vec::<(usize, String)>::deserialize(d)?;
        pairs
            .into_iter()
            .enumerate()
            .map(|(expected, (i, x))| {
                if i != expected {
                    return Err(serde::de::Error::custom("band index out of order"));
                }
                x.parse().map_err(serde::de::Error::custom)
            })
            .collect()
    }
}
