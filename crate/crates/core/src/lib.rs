//! Account-metric analysis of news-sharing factuality.
//!
//! The pipeline scores users by the reliability of the news domains they
//! link to, keeps organic-looking accounts, compares low- and high-factuality
//! groups with one-sided rank tests against a label-shuffle null, and fits a
//! three-class multinomial logit (middle group as reference) whose average
//! marginal effects summarise the combined picture.
//!
//! Module map:
//!
//! - [`ingest`]: JSON-lines user and tweet records, domain extraction, derived metrics.
//! - [`credibility`]: reliability registry, factuality vectors, scores and percentile groups.
//! - [`filtering`]: the relaxed/middle/strict organic-user policies.
//! - [`stats`]: Mann-Whitney U, seeded shuffle ensembles, empirical p-values.
//! - [`regress`]: design matrices, multinomial fit, AMEs, bootstrap, median splits, accuracy.
//! - [`synth`]: planted-structure synthetic populations.
//! - [`pipeline`]: the end-to-end analysis report.

pub mod credibility;
pub mod error;
pub mod exec;
pub mod filtering;
pub mod ingest;
pub mod pipeline;
pub mod regress;
pub mod seed;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
