//! Exact symmetric similarity measurements.
//!
//! Divergences are in nats. Inputs are smoothed with
//! `w' = (w + ε) / (1 + |Ω| ε)`, `ε = 1e-10`, so KL stays finite when the
//! second argument has empty cells.

use crate::dataio::{Dataset, ProbDistribution};
use crate::error::{Error, Result};

pub const SMOOTHING_EPSILON: f64 = 1e-10;

fn check_omega(p: &ProbDistribution, q: &ProbDistribution) -> Result<()> {
    if p.omega_size() != q.omega_size() {
        return Err(Error::OmegaMismatch {
            left: p.omega_size(),
            right: q.omega_size(),
        });
    }
    Ok(())
}

#[inline]
fn smooth(w: f64, norm: f64) -> f64 {
    (w + SMOOTHING_EPSILON) / norm
}

#[inline]
fn kl_term(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q).ln()
    }
}

/// Kullback-Leibler divergence `KL(P || Q)`.
pub fn kl_divergence(p: &ProbDistribution, q: &ProbDistribution) -> Result<f64> {
    check_omega(p, q)?;
    let norm = 1.0 + p.omega_size() as f64 * SMOOTHING_EPSILON;
    Ok(p
        .weights()
        .iter()
        .zip(q.weights())
        .map(|(&pw, &qw)| kl_term(smooth(pw, norm), smooth(qw, norm)))
        .sum())
}

/// Jensen-Shannon divergence, in `[0, ln 2]`. Exactly symmetric.
pub fn js_divergence(p: &ProbDistribution, q: &ProbDistribution) -> Result<f64> {
    check_omega(p, q)?;
    let norm = 1.0 + p.omega_size() as f64 * SMOOTHING_EPSILON;
    let mut left = 0.0;
    let mut right = 0.0;
    for (&pw, &qw) in p.weights().iter().zip(q.weights()) {
        let ps = smooth(pw, norm);
        let qs = smooth(qw, norm);
        let m = 0.5 * (ps + qs);
        left += kl_term(ps, m);
        right += kl_term(qs, m);
    }
    // Both orders produce the same pair of partial sums, so 0.5a + 0.5b
    // commutes exactly.
    let js = 0.5 * left + 0.5 * right;
    Ok(js.clamp(0.0, std::f64::consts::LN_2))
}

/// Euclidean distance between precomputed centers.
pub fn center_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Euclidean distance between the per-dimension means of two datasets.
pub fn l2_center_distance(a: &Dataset, b: &Dataset) -> Result<f64> {
    if a.n_dims() != b.n_dims() {
        return Err(Error::DimensionMismatch {
            expected: a.n_dims(),
            found: b.n_dims(),
        });
    }
    center_distance(&a.center(), &b.center())
}
