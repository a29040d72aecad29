//! Deployment-time model search.
//!
//! Given an unlabeled target dataset and a registry of candidate models, each
//! described by its training data (or by LSH signatures of it), rank the
//! candidates by how well they are expected to serve the target.
//!
//! Five strategies are available in [`strategies`]: exact or LSH-estimated
//! JS divergence, L2 distance between dataset centers, the asymmetric
//! adaptivity metric (exact or through the two-level LSH index in
//! [`adaptivity::index`]), majority voting, and source accuracy.
//! [`evalbench`] scores strategies against ground-truth target accuracy.

pub mod adaptivity;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod evalbench;
pub mod hashing;
pub mod jsdlsh;
pub mod metrics;
pub mod minhash;
pub mod strategies;

pub use dataio::{fit_binning, load_csv, to_distribution, BinningScheme, Dataset, ProbDistribution};
pub use error::{Error, Result};
