//! Data-driven boundary derivation.
//!
//! Samples are embedded with a triplet-trained attribute embedding, every
//! sample gets a leave-one-out IDW severity in level units `[1, 4]`, that
//! severity is mapped to the score axis by `t(s) = (4 − s)/3`, and the 5th
//! percentile of each level's mapped scores becomes that level's floor.

pub mod embedding;
pub mod idw;
pub mod optim;
pub mod projection;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embedding::{
    cosine_distance, train_embeddings, triplet_loss, EmbeddingModel, Hyperparams, TrainingReport,
    TrainingSample,
};
pub use idw::{idw_score, EmbeddedSample, DEFAULT_IDW_EPS};

use crate::scoring::BoundarySet;
use crate::taxonomy::{Quad, SeverityLevel, NUM_LEVELS};

#[derive(Debug, Error)]
pub enum BoundaryError {
    #[error("cannot normalise an all-zero attribute vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training data needs at least two distinct maximum levels")]
    DegenerateDataset,
    #[error("no reference samples left for interpolation")]
    EmptyReferences,
    #[error("no reference samples at level {0}")]
    MissingLevel(SeverityLevel),
    #[error("level thresholds are not strictly decreasing: {thresholds:?}")]
    NonMonotoneThresholds { thresholds: Quad<f64> },
    #[error("level 1 threshold {0} leaves no room below 1.0")]
    DegenerateTopInterval(f64),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("percentile must be within [0, 100], got {0}")]
    BadPercentile(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

/// Maps an IDW severity in level units onto the score axis (level 1 → 1.0,
/// level 4 → 0.0).
pub fn severity_to_unit(s: f64) -> f64 {
    (4.0 - s) / 3.0
}

/// Percentile with linear interpolation between order statistics
/// (rank `p/100 · (n − 1)`).
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&p) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub percentile: f64,
    pub eps: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            percentile: 5.0,
            eps: DEFAULT_IDW_EPS,
        }
    }
}

/// Leave-one-out IDW severity of every reference, in reference order.
pub fn loo_scores(refs: &[EmbeddedSample], eps: f64) -> Result<Vec<f64>, BoundaryError> {
    refs.iter()
        .enumerate()
        .map(|(i, r)| idw_score(&r.z, refs, eps, Some(i)))
        .collect()
}

/// Per-level percentile of leave-one-out IDW scores, mapped to `[0, 1]`.
pub fn level_thresholds(
    refs: &[EmbeddedSample],
    config: &ExtractionConfig,
) -> Result<Quad<f64>, BoundaryError> {
    if !(0.0..=100.0).contains(&config.percentile) {
        return Err(BoundaryError::BadPercentile(config.percentile));
    }
    for level in SeverityLevel::ALL {
        if !refs.iter().any(|r| r.level == level) {
            return Err(BoundaryError::MissingLevel(level));
        }
    }
    let scores = loo_scores(refs, config.eps)?;
    let mut thresholds = [0.0; NUM_LEVELS];
    for level in SeverityLevel::ALL {
        let mapped: Vec<f64> = refs
            .iter()
            .zip(&scores)
            .filter(|(r, _)| r.level == level)
            .map(|(_, &s)| severity_to_unit(s))
            .collect();
        thresholds[level.index()] =
            percentile(&mapped, config.percentile).expect("level has at least one sample");
    }
    Ok(thresholds)
}

/// Turns level thresholds into a boundary set: level 4 is floored at 0 and
/// level 1 capped at 1. Out-of-order thresholds are an error.
pub fn boundaries_from_thresholds(thresholds: &Quad<f64>) -> Result<BoundarySet, BoundaryError> {
    let t = thresholds;
    let ordered = t[0] > t[1] && t[1] > t[2] && t[2] > 0.0;
    if !ordered || t.iter().any(|v| !v.is_finite()) {
        return Err(BoundaryError::NonMonotoneThresholds { thresholds: *t });
    }
    if t[0] >= 1.0 {
        return Err(BoundaryError::DegenerateTopInterval(t[0]));
    }
    BoundarySet::from_floors([t[0], t[1], t[2], 0.0])
        .map_err(|_| BoundaryError::NonMonotoneThresholds { thresholds: *t })
}

pub fn extract_boundaries(
    refs: &[EmbeddedSample],
    config: &ExtractionConfig,
) -> Result<BoundarySet, BoundaryError> {
    boundaries_from_thresholds(&level_thresholds(refs, config)?)
}

pub fn embed_samples(
    model: &EmbeddingModel,
    samples: &[TrainingSample],
) -> Result<Vec<EmbeddedSample>, BoundaryError> {
    samples
        .iter()
        .map(|s| {
            Ok(EmbeddedSample {
                z: model.embed(&s.attributes)?,
                level: s.max_level,
            })
        })
        .collect()
}

/// Metadata stored alongside derived boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationMetadata {
    pub seed: u64,
    pub hyperparams: Hyperparams,
    pub optimizer: String,
    pub triplet_sampling: String,
    pub percentile: f64,
    pub percentile_method: String,
    pub eps: f64,
    pub normalization: String,
    pub leave_one_out: bool,
    pub sample_counts: Quad<usize>,
    pub epoch_losses: Vec<f64>,
}

/// Contents of a boundary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFile {
    pub boundaries: BoundarySet,
    pub thresholds: Quad<f64>,
    pub metadata: DerivationMetadata,
}

impl BoundaryFile {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), BoundaryError> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BoundaryError> {
        read_json(path.as_ref())
    }
}

/// Reads boundaries from either a full boundary file or a bare
/// `[[min, max]; 4]` array.
pub fn load_boundary_set(path: impl AsRef<Path>) -> Result<BoundarySet, BoundaryError> {
    let path = path.as_ref();
    let value: serde_json::Value = read_json(path)?;
    let inner = value.get("boundaries").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| BoundaryError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Embedding checkpoint on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model: EmbeddingModel,
}

pub const CHECKPOINT_FORMAT: &str = "cprt-embedding-v1";

impl Checkpoint {
    pub fn new(model: EmbeddingModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            model,
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), BoundaryError> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BoundaryError> {
        let path = path.as_ref();
        let ck: Checkpoint = read_json(path)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(BoundaryError::Parse {
                path: path.display().to_string(),
                message: format!("unknown checkpoint format `{}`", ck.format),
            });
        }
        Ok(ck)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BoundaryError> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| BoundaryError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, BoundaryError> {
    let text = std::fs::read_to_string(path).map_err(|source| BoundaryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| BoundaryError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Everything produced by one derivation run.
#[derive(Debug, Clone)]
pub struct Derivation {
    pub model: EmbeddingModel,
    pub report: TrainingReport,
    pub embedded: Vec<EmbeddedSample>,
    pub file: BoundaryFile,
}

/// Trains embeddings, embeds the samples and extracts boundaries.
pub fn derive_boundaries(
    samples: &[TrainingSample],
    hyperparams: Hyperparams,
    extraction: ExtractionConfig,
    seed: u64,
) -> Result<Derivation, BoundaryError> {
    let (model, report) = train_embeddings(samples, hyperparams, seed)?;
    let embedded = embed_samples(&model, samples)?;
    let thresholds = level_thresholds(&embedded, &extraction)?;
    let boundaries = boundaries_from_thresholds(&thresholds)?;
    let mut sample_counts = [0usize; NUM_LEVELS];
    for s in samples {
        sample_counts[s.max_level.index()] += 1;
    }
    let metadata = DerivationMetadata {
        seed,
        hyperparams,
        optimizer: "adamw(beta1=0.9, beta2=0.999, eps=1e-8)".to_string(),
        triplet_sampling: "uniform anchor; positive same level; negative other level".to_string(),
        percentile: extraction.percentile,
        percentile_method: "linear".to_string(),
        eps: extraction.eps,
        normalization: "(4 - s) / 3".to_string(),
        leave_one_out: true,
        sample_counts,
        epoch_losses: report.epoch_losses.clone(),
    };
    Ok(Derivation {
        model,
        report,
        embedded,
        file: BoundaryFile {
            boundaries,
            thresholds,
            metadata,
        },
    })
}

/// Synthetic training set with disjoint attribute patterns per level: each
/// sample of level `ℓ` switches on a random non-empty subset of the level-`ℓ`
/// attributes and nothing else. `levels` gives the level of every attribute
/// position, as returned by [`TaxonomyRegistry::levels`](crate::taxonomy::TaxonomyRegistry::levels).
pub fn synthetic_clusters(
    levels: &[SeverityLevel],
    per_level: usize,
    seed: u64,
) -> Vec<TrainingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_level * NUM_LEVELS);
    for level in SeverityLevel::ALL {
        let members: Vec<usize> = (0..levels.len()).filter(|&i| levels[i] == level).collect();
        if members.is_empty() {
            continue;
        }
        for _ in 0..per_level {
            let mut attributes = vec![0u8; levels.len()];
            loop {
                for &m in &members {
                    attributes[m] = u8::from(rng.random_bool(0.5));
                }
                if members.iter().any(|&m| attributes[m] == 1) {
                    break;
                }
            }
            out.push(TrainingSample {
                attributes,
                max_level: level,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::TaxonomyRegistry;
    use approx::assert_abs_diff_eq;

    #[test]
    fn percentile_linear() {
        let v = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 100.0), Some(5.0));
        assert_eq!(percentile(&v, 50.0), Some(3.0));
        assert_abs_diff_eq!(percentile(&v, 5.0).unwrap(), 1.2, epsilon = 1e-12);
        assert_eq!(percentile(&[], 5.0), None);
        assert_eq!(percentile(&v, 101.0), None);
    }

    #[test]
    fn unit_mapping() {
        assert_eq!(severity_to_unit(1.0), 1.0);
        assert_eq!(severity_to_unit(4.0), 0.0);
        assert_abs_diff_eq!(severity_to_unit(2.0), 2.0 / 3.0, epsilon = 1e-15);
    }

    fn pure_clusters(per_level: usize) -> Vec<EmbeddedSample> {
        // Each level sits on its own axis with a tiny deterministic spread.
        let mut refs = Vec::new();
        for level in SeverityLevel::ALL {
            for k in 0..per_level {
                let mut z = vec![0.0; 4];
                z[level.index()] = 1.0;
                z[(level.index() + 1) % 4] = 1e-4 * k as f64;
                refs.push(EmbeddedSample { z, level });
            }
        }
        refs
    }

    #[test]
    fn pure_clusters_recover_level_grid() {
        let t = level_thresholds(&pure_clusters(20), &ExtractionConfig::default()).unwrap();
        assert_abs_diff_eq!(t[0], 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(t[1], 2.0 / 3.0, epsilon = 1e-3);
        assert_abs_diff_eq!(t[2], 1.0 / 3.0, epsilon = 1e-3);
        assert_abs_diff_eq!(t[3], 0.0, epsilon = 1e-3);
        let b = boundaries_from_thresholds(&t).unwrap();
        assert_eq!(b.floors()[3], 0.0);
        assert!(b.floors()[0] < 1.0);
    }

    #[test]
    fn missing_level_reported() {
        let refs: Vec<_> = pure_clusters(3)
            .into_iter()
            .filter(|r| r.level != SeverityLevel::L3)
            .collect();
        assert!(matches!(
            level_thresholds(&refs, &ExtractionConfig::default()),
            Err(BoundaryError::MissingLevel(SeverityLevel::L3))
        ));
    }

    #[test]
    fn out_of_order_thresholds_are_errors() {
        assert!(matches!(
            boundaries_from_thresholds(&[0.6, 0.7, 0.3, 0.0]),
            Err(BoundaryError::NonMonotoneThresholds { .. })
        ));
        assert!(matches!(
            boundaries_from_thresholds(&[0.6, 0.5, -0.1, 0.0]),
            Err(BoundaryError::NonMonotoneThresholds { .. })
        ));
        assert!(matches!(
            boundaries_from_thresholds(&[1.0, 0.5, 0.3, 0.0]),
            Err(BoundaryError::DegenerateTopInterval(_))
        ));
        assert!(boundaries_from_thresholds(&[0.8, 0.5, 0.3, 0.1]).is_ok());
    }

    #[test]
    fn synthetic_clusters_are_disjoint() {
        let reg = TaxonomyRegistry::canonical();
        let levels = reg.levels();
        let data = synthetic_clusters(&levels, 10, 5);
        assert_eq!(data.len(), 40);
        for s in &data {
            assert!(s.attributes.contains(&1));
            for (i, &v) in s.attributes.iter().enumerate() {
                if v == 1 {
                    assert_eq!(levels[i], s.max_level);
                }
            }
        }
        assert_eq!(data, synthetic_clusters(&levels, 10, 5));
    }

    #[test]
    fn boundary_file_loading_accepts_bare_array() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.json");
        std::fs::write(&p, "[[0.8,1.0],[0.5,0.8],[0.2,0.5],[0.0,0.2]]").unwrap();
        let b = load_boundary_set(&p).unwrap();
        assert_eq!(b.floors(), [0.8, 0.5, 0.2, 0.0]);
        std::fs::write(&p, "[[0.8,1.0],[0.5,0.7],[0.2,0.5],[0.0,0.2]]").unwrap();
        assert!(load_boundary_set(&p).is_err());
    }
}
