//! Learning shared latent rankings from pairwise comparisons.
//!
//! A population of users compares pairs of items. Each user blends a small
//! number of global rankings with individual mixing weights, so the observed
//! comparisons are inconsistent both across users and within a single user.
//! This crate recovers the shared rankings from second-order co-occurrence
//! statistics of the comparisons: extreme rows of the normalized moment
//! matrix are located by random projections, every row is regressed onto
//! them under a simplex constraint, and the result is rounded back to a
//! binary ranking matrix.
//!
//! Around that pipeline the crate ships the generative sampler, exact moment
//! oracles, sample-complexity calculators, per-user weight inference,
//! held-out likelihood estimation, rating prediction, ranking metrics, and
//! ingestion of star-ratings files into comparison datasets.

pub mod dataset;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod prior;
pub mod ranking;
pub mod recovery;
pub mod regression;
pub mod rng;
pub mod sampler;
pub mod serialize;
pub mod universe;

pub use error::{RankError, Result};
