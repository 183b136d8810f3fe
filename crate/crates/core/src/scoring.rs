//! Continuous severity scoring.
//!
//! A combination of attribute counts `(c1, c2, c3, c4)` is mapped to a score in
//! `[0, 1]` in three steps:
//!
//! 1. the determined level `L` is the most severe level with a positive count,
//!    and the lexicographic score is `Σ_{k≥L} c_k·w_k`;
//! 2. the ratio to the level maximum is stretched so that a single level-`L`
//!    attribute maps to 0 and the full level to 1;
//! 3. the square root of the stretched ratio interpolates inside the
//!    level's boundary interval.
//!
//! For levels 2..4 the stretched ratio is clamped to `1 − 1e-9` so the level
//! maximum stays strictly below the next level's floor.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::taxonomy::{Quad, SeverityLevel, TaxonomyRegistry, NUM_LEVELS};

/// Upper clamp offset on the stretched ratio for levels 2..4.
pub const RNORM_CLAMP_DELTA: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("score {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("count {count} at level {level} exceeds the level cardinality {cardinality}")]
    CountExceedsCardinality {
        level: usize,
        count: u64,
        cardinality: u64,
    },
    #[error("attribute vector has length {got}, registry has {expected} attributes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("attribute vector entry {index} is {value}, expected 0 or 1")]
    NotBinary { index: usize, value: u8 },
    #[error("boundary set: {0}")]
    InvalidBoundaries(String),
}

/// The four score intervals, stored as per-level floors.
///
/// Level `i` covers `[floor_i, floor_{i-1})`, with level 1 closed at 1.0 and
/// level 4 starting at 0.0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySet {
    floors: Quad<f64>,
}

impl BoundarySet {
    /// Floors (0.711, 0.514, 0.292, 0.0).
    pub fn canonical() -> Self {
        Self {
            floors: [0.711, 0.514, 0.292, 0.0],
        }
    }

    /// Builds a set from per-level floors (level 1 first). Requires
    /// `1 > f1 > f2 > f3 > f4 = 0`.
    pub fn from_floors(floors: Quad<f64>) -> Result<Self, ScoringError> {
        if floors.iter().any(|f| !f.is_finite()) {
            return Err(ScoringError::InvalidBoundaries("non-finite floor".into()));
        }
        if floors[NUM_LEVELS - 1] != 0.0 {
            return Err(ScoringError::InvalidBoundaries(format!(
                "level 4 floor must be 0, got {}",
                floors[NUM_LEVELS - 1]
            )));
        }
        if floors[0] >= 1.0 {
            return Err(ScoringError::InvalidBoundaries(format!(
                "level 1 floor must be below 1, got {}",
                floors[0]
            )));
        }
        for i in 0..NUM_LEVELS - 1 {
            if floors[i] <= floors[i + 1] {
                return Err(ScoringError::InvalidBoundaries(format!(
                    "floors must strictly decrease with level: L{} = {} <= L{} = {}",
                    i + 1,
                    floors[i],
                    i + 2,
                    floors[i + 1]
                )));
            }
        }
        Ok(Self { floors })
    }

    /// Builds a set from explicit `[min, max]` intervals, level 1 first.
    pub fn from_intervals(intervals: Quad<[f64; 2]>) -> Result<Self, ScoringError> {
        if intervals[0][1] != 1.0 {
            return Err(ScoringError::InvalidBoundaries(format!(
                "level 1 interval must end at 1, got {}",
                intervals[0][1]
            )));
        }
        for i in 1..NUM_LEVELS {
            if intervals[i][1] != intervals[i - 1][0] {
                return Err(ScoringError::InvalidBoundaries(format!(
                    "L{} upper end {} does not meet L{} lower end {}",
                    i + 1,
                    intervals[i][1],
                    i,
                    intervals[i - 1][0]
                )));
            }
        }
        Self::from_floors(std::array::from_fn(|i| intervals[i][0]))
    }

    pub fn floors(&self) -> Quad<f64> {
        self.floors
    }

    pub fn min(&self, level: SeverityLevel) -> f64 {
        self.floors[level.index()]
    }

    pub fn max(&self, level: SeverityLevel) -> f64 {
        match level {
            SeverityLevel::L1 => 1.0,
            other => self.floors[other.index() - 1],
        }
    }

    pub fn intervals(&self) -> Quad<[f64; 2]> {
        std::array::from_fn(|i| {
            let level = SeverityLevel::from_index(i);
            [self.min(level), self.max(level)]
        })
    }

    /// True if `value` lies in the level's interval (closed at 1.0 for L1,
    /// half-open otherwise).
    pub fn contains(&self, level: SeverityLevel, value: f64) -> bool {
        let lo = self.min(level);
        let hi = self.max(level);
        match level {
            SeverityLevel::L1 => value >= lo && value <= hi,
            _ => value >= lo && value < hi,
        }
    }
}

impl Default for BoundarySet {
    fn default() -> Self {
        Self::canonical()
    }
}

impl Serialize for BoundarySet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.intervals().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoundarySet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let intervals = <Quad<[f64; 2]>>::deserialize(d)?;
        Self::from_intervals(intervals).map_err(serde::de::Error::custom)
    }
}

/// Attribute counts per level, level 1 first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LevelCounts(pub Quad<u64>);

impl LevelCounts {
    pub fn new(c1: u64, c2: u64, c3: u64, c4: u64) -> Self {
        Self([c1, c2, c3, c4])
    }

    pub fn get(&self, level: SeverityLevel) -> u64 {
        self.0[level.index()]
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn check(&self, cardinalities: &Quad<u64>) -> Result<(), ScoringError> {
        for (i, (&count, &cardinality)) in self.0.iter().zip(cardinalities).enumerate() {
            if count > cardinality {
                return Err(ScoringError::CountExceedsCardinality {
                    level: i + 1,
                    count,
                    cardinality,
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for LevelCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "({a},{b},{c},{d})")
    }
}

/// A score and the level whose interval it was placed in. `level` is `None`
/// only for the empty combination, which scores 0.0 ("safe").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityScore {
    pub value: f64,
    pub determined_level: Option<SeverityLevel>,
}

impl SeverityScore {
    pub const SAFE: SeverityScore = SeverityScore {
        value: 0.0,
        determined_level: None,
    };

    pub fn level_label(&self) -> String {
        level_label(self.determined_level)
    }
}

/// `"L1"`..`"L4"`, or `"safe"` for no level.
pub fn level_label(level: Option<SeverityLevel>) -> String {
    level.map_or_else(|| "safe".to_string(), |l| l.to_string())
}

/// Most severe level with a positive count.
pub fn determined_level(counts: &LevelCounts) -> Option<SeverityLevel> {
    counts
        .0
        .iter()
        .position(|&c| c > 0)
        .map(SeverityLevel::from_index)
}

/// `Σ_{k≥L} c_k·w_k`; zero for the empty combination.
pub fn lex_score(counts: &LevelCounts, weights: &Quad<u64>) -> u64 {
    match determined_level(counts) {
        Some(level) => (level.index()..NUM_LEVELS)
            .map(|k| counts.0[k] * weights[k])
            .sum(),
        None => 0,
    }
}

/// Largest lexicographic score reachable at `level`: `Σ_{k≥L} |A_k|·w_k`.
pub fn max_lex_score(level: SeverityLevel, cardinalities: &Quad<u64>, weights: &Quad<u64>) -> u64 {
    (level.index()..NUM_LEVELS)
        .map(|k| cardinalities[k] * weights[k])
        .sum()
}

/// Stretched ratio `(r − r_min)/(1 − r_min)` before clamping.
///
/// Evaluated as `(S_lex − w_L)/(S_max − w_L)`, which is the same quantity
/// with `S_max` cancelled, so a single attribute gives exactly 0 and the full
/// level exactly 1. A level whose only reachable combination is a single
/// attribute (`S_max = w_L`) maps to 0.
pub fn stretched_ratio(
    counts: &LevelCounts,
    cardinalities: &Quad<u64>,
    weights: &Quad<u64>,
) -> Option<f64> {
    let level = determined_level(counts)?;
    let lex = lex_score(counts, weights);
    let max = max_lex_score(level, cardinalities, weights);
    let floor = weights[level.index()];
    if max <= floor {
        return Some(0.0);
    }
    Some((lex - floor) as f64 / (max - floor) as f64)
}

/// Scores counts against explicit cardinalities, weights and boundaries.
/// Callers are responsible for passing validated weights.
pub fn score_counts(
    counts: &LevelCounts,
    cardinalities: &Quad<u64>,
    weights: &Quad<u64>,
    boundaries: &BoundarySet,
) -> Result<SeverityScore, ScoringError> {
    counts.check(cardinalities)?;
    let Some(level) = determined_level(counts) else {
        return Ok(SeverityScore::SAFE);
    };
    let mut r_norm = stretched_ratio(counts, cardinalities, weights)
        .unwrap_or(0.0)
        .clamp(0.0, 1.0);
    if level != SeverityLevel::L1 {
        r_norm = r_norm.min(1.0 - RNORM_CLAMP_DELTA);
    }
    let lo = boundaries.min(level);
    let hi = boundaries.max(level);
    Ok(SeverityScore {
        value: lo + (hi - lo) * r_norm.sqrt(),
        determined_level: Some(level),
    })
}

pub fn severity_score(
    counts: &LevelCounts,
    registry: &TaxonomyRegistry,
) -> Result<SeverityScore, ScoringError> {
    score_counts(
        counts,
        &registry.cardinalities(),
        &registry.weights(),
        registry.boundaries(),
    )
}

/// Maps a score back to the level whose interval contains it.
pub fn bucketize(score: f64, boundaries: &BoundarySet) -> Result<SeverityLevel, ScoringError> {
    if !(0.0..=1.0).contains(&score) {
        return Err(ScoringError::OutOfRange(score));
    }
    let level = SeverityLevel::ALL
        .into_iter()
        .find(|&l| score >= boundaries.min(l))
        .unwrap_or(SeverityLevel::L4);
    Ok(level)
}

/// Per-level counts of a binary attribute vector in registry order.
pub fn counts_from_vector(
    vector: &[u8],
    registry: &TaxonomyRegistry,
) -> Result<LevelCounts, ScoringError> {
    if vector.len() != registry.len() {
        return Err(ScoringError::LengthMismatch {
            expected: registry.len(),
            got: vector.len(),
        });
    }
    let mut counts = [0u64; NUM_LEVELS];
    for (index, (&v, attr)) in vector.iter().zip(registry.attributes()).enumerate() {
        match v {
            0 => {}
            1 => counts[attr.level.index()] += 1,
            value => return Err(ScoringError::NotBinary { index, value }),
        }
    }
    Ok(LevelCounts(counts))
}

pub fn score_attribute_vector(
    vector: &[u8],
    registry: &TaxonomyRegistry,
) -> Result<SeverityScore, ScoringError> {
    let counts = counts_from_vector(vector, registry)?;
    severity_score(&counts, registry)
}
