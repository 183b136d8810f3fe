//! Severity scoring for visual privacy risk.
//!
//! A fixed taxonomy of privacy attributes is split into four severity levels.
//! Detected attributes are combined by a lexicographic score that is then
//! stretched into per-level intervals of `[0, 1]`, so any image with a more
//! severe attribute always outranks one without.

pub mod annotation;
pub mod boundary;
pub mod cli;
pub mod dataset_io;
pub mod metrics;
pub mod properties;
pub mod scoring;
pub mod taxonomy;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use scoring::{
    bucketize, score_counts, severity_score, BoundarySet, LevelCounts, SeverityScore,
};
pub use taxonomy::{classify_attribute, SeverityLevel, TaxonomyRegistry};
