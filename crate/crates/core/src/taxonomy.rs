//! Attribute registry, the four-question decision tree, and the lexicographic
//! weight constraint.
//!
//! Every attribute carries the answers to the four ordered questions that
//! place it in the taxonomy. Its level is always derived from those answers,
//! so extending the registry with a new attribute is a matter of answering
//! the questions and re-validating the weights.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scoring::{BoundarySet, ScoringError};

/// Number of severity levels.
pub const NUM_LEVELS: usize = 4;

/// Canonical 22-attribute taxonomy shipped with the crate.
pub const CANONICAL_TAXONOMY_JSON: &str = include_str!("../assets/cprt_canonical.json");

/// Per-level quadruple, indexed by level 1..=4 at positions 0..=3.
pub type Quad<T> = [T; NUM_LEVELS];

#[derive(Debug, Error, PartialEq)]
pub enum TaxonomyError {
    #[error("no decision question answered yes; attribute is outside the taxonomy")]
    AllNegative,
    #[error("duplicate attribute id `{0}`")]
    DuplicateId(String),
    #[error(
        "weights violate the lexicographic constraint at level {level}: \
         w{level} = {weight} must exceed {required_floor}"
    )]
    InvalidWeights {
        level: usize,
        weight: u64,
        required_floor: u64,
    },
    #[error(
        "attribute `{id}` declares level {declared} but its answers place it at level {derived}"
    )]
    LevelMismatch {
        id: String,
        declared: u8,
        derived: u8,
    },
    #[error("severity level must be in 1..=4, got {0}")]
    BadLevel(i64),
    #[error("registry has no attributes")]
    Empty,
    #[error("invalid boundaries: {0}")]
    Boundaries(#[from] ScoringError),
    #[error("taxonomy file: {0}")]
    Parse(String),
    #[error("cannot read taxonomy file {path}: {message}")]
    Io { path: String, message: String },
}

/// One of the four ordered severity levels. `L1` is the most severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SeverityLevel {
    /// Unique identifiers.
    L1 = 1,
    /// Linkage-based identifiers.
    L2 = 2,
    /// Aggregation-based identifiers.
    L3 = 3,
    /// Benign contextual information.
    L4 = 4,
}

impl SeverityLevel {
    pub const ALL: [SeverityLevel; NUM_LEVELS] = [Self::L1, Self::L2, Self::L3, Self::L4];

    pub fn from_number(n: i64) -> Result<Self, TaxonomyError> {
        match n {
            1 => Ok(Self::L1),
            2 => Ok(Self::L2),
            3 => Ok(Self::L3),
            4 => Ok(Self::L4),
            other => Err(TaxonomyError::BadLevel(other)),
        }
    }

    /// Zero-based position of this level in per-level arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::L1 => "Unique Identifiers",
            Self::L2 => "Linkage-Based Identifiers",
            Self::L3 => "Aggregation-Based Identifiers",
            Self::L4 => "Benign Contextual Information",
        }
    }
}

impl fmt::Display for SeverityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.number())
    }
}

impl Serialize for SeverityLevel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for SeverityLevel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let n = i64::deserialize(d)?;
        Self::from_number(n).map_err(serde::de::Error::custom)
    }
}

/// Walks the decision tree: the first question answered yes fixes the level.
///
/// Q1 asks whether the attribute is permanently tied to one person and
/// identifies them alone, Q2 whether it is assigned to a person or reveals
/// sensitive information, Q3 whether it helps identify or profile in
/// combination, and Q4 whether it is benign but context-dependent.
pub fn classify_attribute(answers: [bool; NUM_LEVELS]) -> Result<SeverityLevel, TaxonomyError> {
    answers
        .iter()
        .position(|&yes| yes)
        .map(SeverityLevel::from_index)
        .ok_or(TaxonomyError::AllNegative)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub id: String,
    pub name: String,
    pub level: SeverityLevel,
    #[serde(default)]
    pub subcategory: String,
    /// Answers to Q1..Q4. Questions after the first yes are never asked and
    /// are stored as `false`.
    pub answers: [bool; NUM_LEVELS],
}

impl AttributeSpec {
    /// Builds a spec whose level is derived from `answers`.
    pub fn from_answers(
        id: impl Into<String>,
        name: impl Into<String>,
        subcategory: impl Into<String>,
        answers: [bool; NUM_LEVELS],
    ) -> Result<Self, TaxonomyError> {
        Ok(Self {
            id: id.into(),
            name: name.into(),
            level: classify_attribute(answers)?,
            subcategory: subcategory.into(),
            answers,
        })
    }

    fn check_level(&self) -> Result<(), TaxonomyError> {
        let derived = classify_attribute(self.answers)?;
        if derived != self.level {
            return Err(TaxonomyError::LevelMismatch {
                id: self.id.clone(),
                declared: self.level.number(),
                derived: derived.number(),
            });
        }
        Ok(())
    }
}

/// Σ_{j>i} |A_j|·w_j for every level i (zero-based), i.e. the largest
/// contribution all lower-severity attributes can make together.
fn lower_level_capacity(cardinalities: &Quad<u64>, weights: &Quad<u64>) -> Quad<u64> {
    let mut cap = [0u64; NUM_LEVELS];
    for i in (0..NUM_LEVELS - 1).rev() {
        cap[i] = cap[i + 1] + cardinalities[i + 1] * weights[i + 1];
    }
    cap
}

/// Checks `w_i > Σ_{j>i} |A_j|·w_j` for levels 1..3 and that all weights are
/// positive. Reports the first (most severe) violating level.
pub fn validate_weights(
    cardinalities: &Quad<u64>,
    weights: &Quad<u64>,
) -> Result<(), TaxonomyError> {
    let cap = lower_level_capacity(cardinalities, weights);
    for i in 0..NUM_LEVELS {
        if weights[i] <= cap[i] {
            return Err(TaxonomyError::InvalidWeights {
                level: i + 1,
                weight: weights[i],
                required_floor: cap[i],
            });
        }
    }
    Ok(())
}

/// Slack `w_i − Σ_{j>i}|A_j|·w_j` per level; positive everywhere for valid weights.
pub fn weight_slacks(cardinalities: &Quad<u64>, weights: &Quad<u64>) -> Quad<i128> {
    let cap = lower_level_capacity(cardinalities, weights);
    std::array::from_fn(|i| weights[i] as i128 - cap[i] as i128)
}

/// Smallest integer weights satisfying the lexicographic constraint.
pub fn minimal_valid_weights(cardinalities: &Quad<u64>) -> Quad<u64> {
    let mut w = [0u64; NUM_LEVELS];
    w[NUM_LEVELS - 1] = 1;
    for i in (0..NUM_LEVELS - 1).rev() {
        let cap: u64 = (i + 1..NUM_LEVELS).map(|j| cardinalities[j] * w[j]).sum();
        w[i] = cap + 1;
    }
    w
}

/// Immutable, validated taxonomy: attributes, per-level cardinalities,
/// lexicographic weights and score boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxonomyRegistry {
    attributes: Vec<AttributeSpec>,
    cardinalities: Quad<u64>,
    weights: Quad<u64>,
    boundaries: BoundarySet,
    version: Option<String>,
}

/// On-disk layout of a taxonomy definition file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaxonomyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub weights: Quad<u64>,
    pub boundaries: BoundarySet,
    pub attributes: Vec<AttributeSpec>,
}

/// Validates specs and weights and assembles a registry.
pub fn build_registry(
    specs: Vec<AttributeSpec>,
    weights: Quad<u64>,
    boundaries: BoundarySet,
) -> Result<TaxonomyRegistry, TaxonomyError> {
    if specs.is_empty() {
        return Err(TaxonomyError::Empty);
    }
    let mut seen = HashSet::new();
    let mut cardinalities = [0u64; NUM_LEVELS];
    for spec in &specs {
        if !seen.insert(spec.id.as_str()) {
            return Err(TaxonomyError::DuplicateId(spec.id.clone()));
        }
        spec.check_level()?;
        cardinalities[spec.level.index()] += 1;
    }
    validate_weights(&cardinalities, &weights)?;
    Ok(TaxonomyRegistry {
        attributes: specs,
        cardinalities,
        weights,
        boundaries,
        version: None,
    })
}

impl TaxonomyRegistry {
    /// The shipped 22-attribute taxonomy with weights (330, 30, 5, 1).
    pub fn canonical() -> Self {
        Self::from_json_str(CANONICAL_TAXONOMY_JSON).expect("canonical taxonomy asset is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self, TaxonomyError> {
        let file: TaxonomyFile =
            serde_json::from_str(text).map_err(|e| TaxonomyError::Parse(e.to_string()))?;
        Self::from_file_model(file)
    }

    pub fn from_file_model(file: TaxonomyFile) -> Result<Self, TaxonomyError> {
        let mut reg = build_registry(file.attributes, file.weights, file.boundaries)?;
        reg.version = file.version;
        Ok(reg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TaxonomyError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_file_model(&self) -> TaxonomyFile {
        TaxonomyFile {
            version: self.version.clone(),
            weights: self.weights,
            boundaries: self.boundaries,
            attributes: self.attributes.clone(),
        }
    }

    /// Returns a new registry with `spec` appended. Weights are re-validated;
    /// use [`TaxonomyRegistry::with_minimal_weights`] to repair them.
    pub fn with_attribute(&self, spec: AttributeSpec) -> Result<Self, TaxonomyError> {
        let mut specs = self.attributes.clone();
        specs.push(spec);
        let mut reg = build_registry(specs, self.weights, self.boundaries)?;
        reg.version = self.version.clone();
        Ok(reg)
    }

    /// Same attributes with the minimal valid weights for their cardinalities.
    pub fn with_minimal_weights(&self) -> Self {
        Self {
            weights: minimal_valid_weights(&self.cardinalities),
            ..self.clone()
        }
    }

    pub fn with_boundaries(&self, boundaries: BoundarySet) -> Self {
        Self {
            boundaries,
            ..self.clone()
        }
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn cardinalities(&self) -> Quad<u64> {
        self.cardinalities
    }

    pub fn weights(&self) -> Quad<u64> {
        self.weights
    }

    pub fn boundaries(&self) -> &BoundarySet {
        &self.boundaries
    }

    pub fn version(&self) -> Option<&str> {
        self.version.as_deref()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&AttributeSpec> {
        self.attributes.iter().find(|a| a.id == id)
    }

    /// Severity level of every attribute, in registry order.
    pub fn levels(&self) -> Vec<SeverityLevel> {
        self.attributes.iter().map(|a| a.level).collect()
    }

    /// Number of count combinations, ∏(|A_i| + 1), including the empty one.
    pub fn combination_count(&self) -> u64 {
        self.cardinalities.iter().map(|c| c + 1).product()
    }
}
