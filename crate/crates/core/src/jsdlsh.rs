//! Locality-sensitive hashing for the Jensen-Shannon divergence.
//!
//! Each hash function maps a distribution `P` to `ceil((a · sqrt(P) + b) / r)`
//! with `a` a standard normal vector over the sample space and `b` uniform on
//! `[0, r)`. `K` such raw values are grouped into `L` bands of `K / L`
//! consecutive values; each band is digested into a 64-bit token.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::ProbDistribution;
use crate::error::{Error, Result};
use crate::hashing::{derive_seed, digest_words};

/// Lower-bound factor relating the squared `sqrt(P)` distance to the
/// JS divergence.
pub const JSD_BOUND_FACTOR: f64 = 0.69;

pub const DEFAULT_BUCKET_WIDTH: f64 = 1.4;
pub const DEFAULT_HASHES: usize = 800;
pub const DEFAULT_BANDS: usize = 200;

/// Serializable description from which a family is rebuilt exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JsdFamilyManifest {
    pub seed: u64,
    #[serde(rename = "K")]
    pub hashes: usize,
    #[serde(rename = "L")]
    pub bands: usize,
    pub r: f64,
    pub omega_size: usize,
}

#[derive(Debug, Clone)]
pub struct JsdLshFamily {
    manifest: JsdFamilyManifest,
    /// `omega_size x hashes`: all hash coefficients of one cell are
    /// contiguous, so hashing runs across functions in the inner loop.
    projections: Vec<f64>,
    offsets: Vec<f64>,
    digest_seed: u64,
}

fn validate(hashes: usize, bands: usize, r: f64, omega_size: usize) -> Result<()> {
    if hashes == 0 || bands == 0 || hashes % bands != 0 {
        return Err(Error::InvalidParameter(format!(
            "K={hashes} must be a positive multiple of L={bands}"
        )));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("bucket width r={r} must be positive")));
    }
    if omega_size == 0 {
        return Err(Error::InvalidParameter("omega_size must be positive".into()));
    }
    Ok(())
}

impl JsdLshFamily {
    pub fn new(seed: u64, hashes: usize, bands: usize, r: f64, omega_size: usize) -> Result<Self> {
        validate(hashes, bands, r, omega_size)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "jsd-projections"));
        let rows: Vec<f64> = (0..hashes * omega_size)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let projections = cell_major(&rows, hashes, omega_size);
        let offsets = (0..hashes).map(|_| rng.random::<f64>() * r).collect();
        Ok(JsdLshFamily {
            manifest: JsdFamilyManifest {
                seed,
                hashes,
                bands,
                r,
                omega_size,
            },
            projections,
            offsets,
            digest_seed: derive_seed(seed, "jsd-band-digest"),
        })
    }

    pub fn from_manifest(m: &JsdFamilyManifest) -> Result<Self> {
        JsdLshFamily::new(m.seed, m.hashes, m.bands, m.r, m.omega_size)
    }

    /// Builds a family from explicit projection vectors and offsets.
    pub fn from_parts(
        projections: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        bands: usize,
        r: f64,
        seed: u64,
    ) -> Result<Self> {
        let hashes = projections.len();
        let omega_size = projections.first().map(Vec::len).unwrap_or(0);
        validate(hashes, bands, r, omega_size)?;
        if offsets.len() != hashes || projections.iter().any(|a| a.len() != omega_size) {
            return Err(Error::InvalidParameter("ragged projection matrix".into()));
        }
        Ok(JsdLshFamily {
            manifest: JsdFamilyManifest {
                seed,
                hashes,
                bands,
                r,
                omega_size,
            },
            projections: cell_major(&projections.concat(), hashes, omega_size),
            offsets,
            digest_seed: derive_seed(seed, "jsd-band-digest"),
        })
    }

    pub fn manifest(&self) -> JsdFamilyManifest {
        self.manifest
    }

    pub fn hashes(&self) -> usize {
        self.manifest.hashes
    }

    pub fn bands(&self) -> usize {
        self.manifest.bands
    }

    pub fn rows_per_band(&self) -> usize {
        self.manifest.hashes / self.manifest.bands
    }

    pub fn bucket_width(&self) -> f64 {
        self.manifest.r
    }

    pub fn omega_size(&self) -> usize {
        self.manifest.omega_size
    }

    /// Projection vector `a` of hash function `i`.
    pub fn projection(&self, i: usize) -> Vec<f64> {
        let k = self.manifest.hashes;
        (0..self.manifest.omega_size).map(|j| self.projections[j * k + i]).collect()
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// The `K` raw integer hash values of `P`.
    pub fn raw_hashes(&self, p: &ProbDistribution) -> Result<Vec<i64>> {
        Ok(self.raw_hashes_many(std::slice::from_ref(p))?.remove(0))
    }

    /// Raw hash values of several distributions. Same result as calling
    /// [`raw_hashes`](Self::raw_hashes) on each, but every projection column
    /// is read once per block of distributions.
    pub fn raw_hashes_many(&self, ps: &[ProbDistribution]) -> Result<Vec<Vec<i64>>> {
        const BLOCK: usize = 4;
        let k = self.manifest.hashes;
        let omega = self.manifest.omega_size;
        if let Some(p) = ps.iter().find(|p| p.omega_size() != omega) {
            return Err(Error::OmegaMismatch {
                left: omega,
                right: p.omega_size(),
            });
        }
        let mut out = Vec::with_capacity(ps.len());
        for block in ps.chunks(BLOCK) {
            // each dot product still sums its terms in cell order
            let mut dots = vec![vec![0.0; k]; block.len()];
            let weights: Vec<&[f64]> = block.iter().map(|p| p.weights()).collect();
            project(&self.projections, &weights, &mut dots);
            for d in &dots {
                out.push(self.quantize(d)?);
            }
        }
        Ok(out)
    }

    fn quantize(&self, dots: &[f64]) -> Result<Vec<i64>> {
        const LIMIT: f64 = (1u64 << 62) as f64;
        let r = self.manifest.r;
        let mut in_range = true;
        let out = dots
            .iter()
            .zip(&self.offsets)
            .map(|(&dot, &b)| {
                let v = (dot + b) / r;
                // |a . sqrt(P)| <= |a| since |sqrt(P)| = 1; also rejects NaN
                in_range &= v.abs() < LIMIT;
                // ceil without a libm call; the cast truncates toward zero
                let t = v as i64;
                t + ((t as f64) < v) as i64
            })
            .collect();
        if !in_range {
            return Err(Error::InvalidParameter("hash value out of range".into()));
        }
        Ok(out)
    }

    /// Banded signature of `P`.
    pub fn hash_distribution(&self, p: &ProbDistribution) -> Result<JsdSignature> {
        let raw = self.raw_hashes(p)?;
        Ok(self.band_raw(&raw))
    }

    /// Banded signatures of several distributions.
    pub fn hash_distributions(&self, ps: &[ProbDistribution]) -> Result<Vec<JsdSignature>> {
        Ok(self.raw_hashes_many(ps)?.iter().map(|raw| self.band_raw(raw)).collect())
    }

    pub(crate) fn band_raw(&self, raw: &[i64]) -> JsdSignature {
        let bands = raw
            .chunks_exact(self.rows_per_band())
            .map(|chunk| digest_words(self.digest_seed, chunk.iter().map(|&v| v as u64)))
            .collect();
        JsdSignature { bands }
    }

    /// Band-level collision rate expected at the threshold `t`:
    /// `g(t)^(K/L)`.
    pub fn band_threshold(&self, t: f64) -> Result<f64> {
        let e1 = threshold_to_collision(t, self.manifest.r)?;
        Ok(e1.powi(self.rows_per_band() as i32))
    }
}

/// Accumulates `sqrt(w_j) * a_j` into `dots` for every cell `j`, where
/// `a_j` is the cell-major projection column. No fused multiply-add is
/// used, so the AVX2 path gives the same bits as the portable one.
fn project(projections: &[f64], weights: &[&[f64]], dots: &mut [Vec<f64>]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime
        return unsafe { project_avx2(projections, weights, dots) };
    }
    project_portable(projections, weights, dots)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn project_avx2(projections: &[f64], weights: &[&[f64]], dots: &mut [Vec<f64>]) {
    project_portable(projections, weights, dots)
}

#[inline(always)]
fn project_portable(projections: &[f64], weights: &[&[f64]], dots: &mut [Vec<f64>]) {
    let k = dots.first().map_or(0, Vec::len);
    if k == 0 {
        return;
    }
    for (j, column) in projections.chunks_exact(k).enumerate() {
        for (w, d) in weights.iter().zip(dots.iter_mut()) {
            // empty cells would only add zeros
            if w[j] == 0.0 {
                continue;
            }
            let x = w[j].sqrt();
            for (di, a) in d.iter_mut().zip(column) {
                *di += a * x;
            }
        }
    }
}

/// `L` band digests, stored in band order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JsdSignature {
    bands: Vec<u64>,
}

impl JsdSignature {
    pub fn from_digests(bands: Vec<u64>) -> Self {
        JsdSignature { bands }
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn digests(&self) -> &[u64] {
        &self.bands
    }

    /// `(band_index, digest)` tokens.
    pub fn tokens(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.bands.iter().enumerate().map(|(i, &d)| (i as u32, d))
    }
}

impl Serialize for JsdSignature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.bands.len()))?;
        for (i, d) in self.tokens() {
            seq.serialize_element(&(i, d.to_string()))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for JsdSignature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let pairs = Vec::<(u32, String)>::deserialize(d)?;
        let mut bands = Vec::with_capacity(pairs.len());
        for (expected, (i, digest)) in pairs.into_iter().enumerate() {
            if i as usize != expected {
                return Err(D::Error::custom(format!(
                    "band index {i} out of order (expected {expected})"
                )));
            }
            bands.push(digest.parse().map_err(D::Error::custom)?);
        }
        Ok(JsdSignature { bands })
    }
}

/// Fraction of bands whose digests agree.
pub fn collision_estimate(a: &JsdSignature, b: &JsdSignature) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::SignatureMismatch(format!(
            "band counts {} and {}",
            a.len(),
            b.len()
        )));
    }
    let hits = a.bands.iter().zip(&b.bands).filter(|(x, y)| x == y).count();
    Ok(hits as f64 / a.len() as f64)
}

/// Transposes a `hashes x omega` row-major matrix.
fn cell_major(rows: &[f64], hashes: usize, omega: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows.len()];
    for i in 0..hashes {
        for j in 0..omega {
            out[j * hashes + i] = rows[i * omega + j];
        }
    }
    out
}

/// Collision probability of one raw hash for two points at distance `c`:
/// `p(c) = ∫_0^r (1/c) f(x/c) (1 - x/r) dx` with `f` the density of `|N(0,1)|`.
pub fn collision_probability(c: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) || !(c >= 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("need c >= 0 and r > 0 (c={c}, r={r})")));
    }
    if c == 0.0 {
        return Ok(1.0);
    }
    let s = r / c;
    let tail = statrs::function::erf::erfc(s / SQRT_2);
    let p = 1.0 - tail - 2.0 / ((2.0 * PI).sqrt() * s) * (1.0 - (-s * s / 2.0).exp());
    Ok(p.clamp(0.0, 1.0))
}

/// Distance bound in `sqrt(P)` space implied by the JS threshold `t`.
pub fn threshold_distance(t: f64) -> f64 {
    (t / JSD_BOUND_FACTOR).sqrt()
}

/// `g(t)`: raw-hash collision probability for pairs at the JS threshold.
pub fn threshold_to_collision(t: f64, r: f64) -> Result<f64> {
    if !(t > 0.0 && t < std::f64::consts::LN_2) {
        return Err(Error::InvalidParameter(format!("JS threshold {t} outside (0, ln 2)")));
    }
    collision_probability(threshold_distance(t), r)
}
