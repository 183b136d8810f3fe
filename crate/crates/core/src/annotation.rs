//! Annotation aggregation and agreement statistics.
//!
//! Annotators label each attribute 0 (absent), 0.5 (ambiguous) or 1 (clearly
//! present). Ambiguous labels count as absent everywhere in this module.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnnotationError {
    #[error("records describe different images: `{0}` vs `{1}`")]
    IdMismatch(String, String),
    #[error("label vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no labels to aggregate")]
    Empty,
    #[error("label value {0} is not one of 0, 0.5, 1")]
    BadLabelValue(f64),
    #[error("kappa needs at least two items, got {0}")]
    TooFewItems(usize),
    #[error("no image was labelled by two or more annotators")]
    NoOverlap,
}

/// Three-valued annotation label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Absent,
    Ambiguous,
    Present,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Absent, Label::Ambiguous, Label::Present];

    pub fn from_value(v: f64) -> Result<Self, AnnotationError> {
        if v == 0.0 {
            Ok(Self::Absent)
        } else if v == 0.5 {
            Ok(Self::Ambiguous)
        } else if v == 1.0 {
            Ok(Self::Present)
        } else {
            Err(AnnotationError::BadLabelValue(v))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Self::Absent => 0.0,
            Self::Ambiguous => 0.5,
            Self::Present => 1.0,
        }
    }

    /// 1 only for a clear presence; ambiguity maps to 0.
    pub fn binarize(self) -> u8 {
        u8::from(self == Self::Present)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Absent => s.serialize_u8(0),
            Self::Ambiguous => s.serialize_f64(0.5),
            Self::Present => s.serialize_u8(1),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Self::from_value(v).map_err(serde::de::Error::custom)
    }
}

/// One annotator's labels for one image, in registry attribute order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub annotator_id: String,
    pub labels: Vec<Label>,
    /// Free-text justification keyed by attribute id.
    pub rationale: BTreeMap<String, String>,
}

impl AnnotationRecord {
    pub fn binarized(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.binarize()).collect()
    }
}

/// Two-annotator merge: an attribute is kept only when both annotators mark
/// it clearly present.
pub fn merge_dual(a: &AnnotationRecord, b: &AnnotationRecord) -> Result<Vec<u8>, AnnotationError> {
    if a.image_id != b.image_id {
        return Err(AnnotationError::IdMismatch(
            a.image_id.clone(),
            b.image_id.clone(),
        ));
    }
    merge_dual_labels(&a.labels, &b.labels)
}

pub fn merge_dual_labels(a: &[Label], b: &[Label]) -> Result<Vec<u8>, AnnotationError> {
    if a.len() != b.len() {
        return Err(AnnotationError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| x.binarize() & y.binarize())
        .collect())
}

/// 1 iff strictly more than half of the binarised labels are 1; ties go to 0.
pub fn majority_vote(labels: &[u8]) -> Result<u8, AnnotationError> {
    if labels.is_empty() {
        return Err(AnnotationError::Empty);
    }
    let ones = labels.iter().filter(|&&l| l != 0).count();
    Ok(u8::from(2 * ones > labels.len()))
}

/// Attribute-wise majority vote across annotators' label vectors.
pub fn majority_vote_vectors(vectors: &[Vec<u8>]) -> Result<Vec<u8>, AnnotationError> {
    let first = vectors.first().ok_or(AnnotationError::Empty)?;
    for v in vectors {
        if v.len() != first.len() {
            return Err(AnnotationError::LengthMismatch(first.len(), v.len()));
        }
    }
    (0..first.len())
        .map(|j| {
            let column: Vec<u8> = vectors.iter().map(|v| v[j]).collect();
            majority_vote(&column)
        })
        .collect()
}

/// Fraction of positions where two binary vectors agree.
pub fn percent_agreement(a: &[u8], b: &[u8]) -> Result<f64, AnnotationError> {
    if a.len() != b.len() {
        return Err(AnnotationError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(AnnotationError::Empty);
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}

/// Strict consensus: fraction of positions where every vector carries the
/// same label.
pub fn consensus_agreement(vectors: &[&[u8]]) -> Result<f64, AnnotationError> {
    let first = vectors.first().ok_or(AnnotationError::Empty)?;
    if first.is_empty() {
        return Err(AnnotationError::Empty);
    }
    for v in vectors {
        if v.len() != first.len() {
            return Err(AnnotationError::LengthMismatch(first.len(), v.len()));
        }
    }
    let same = (0..first.len())
        .filter(|&j| vectors.iter().all(|v| v[j] == first[j]))
        .count();
    Ok(same as f64 / first.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    /// Set when both raters used a single identical label throughout, which
    /// leaves kappa undefined; `value` is then 0.
    pub degenerate: bool,
}

/// Cohen's kappa for two binary raters.
///
/// Computed from integer counts as `(n·agree − Σ a_k b_k)/(n² − Σ a_k b_k)`,
/// which equals `(p_o − p_e)/(1 − p_e)` with a single final division.
pub fn cohen_kappa(a: &[u8], b: &[u8]) -> Result<Kappa, AnnotationError> {
    if a.len() != b.len() {
        return Err(AnnotationError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as u64;
    if n < 2 {
        return Err(AnnotationError::TooFewItems(a.len()));
    }
    let agree = a
        .iter()
        .zip(b)
        .filter(|(x, y)| (**x != 0) == (**y != 0))
        .count() as u64;
    let a1 = a.iter().filter(|&&x| x != 0).count() as u64;
    let b1 = b.iter().filter(|&&x| x != 0).count() as u64;
    let chance = a1 * b1 + (n - a1) * (n - b1);
    let denom = n * n - chance;
    if denom == 0 {
        return Ok(Kappa {
            value: 0.0,
            degenerate: true,
        });
    }
    let numer = (n * agree) as i128 - chance as i128;
    Ok(Kappa {
        value: numer as f64 / denom as f64,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementMode {
    /// Mean over annotator pairs of pairwise match rates.
    Pairwise,
    /// An item counts as agreed only when every annotator gave the same label.
    Consensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub mode: AgreementMode,
    pub percent_agreement: f64,
    pub cohen_kappa: f64,
    pub kappa_degenerate: bool,
    /// How kappa is combined across more than two annotators.
    pub kappa_aggregation: String,
    pub per_attribute_agreement: Vec<f64>,
    pub n_items: usize,
    pub n_images: usize,
    pub n_annotators: usize,
    pub n_pairs: usize,
}

type ImageTable<'a> = BTreeMap<&'a str, BTreeMap<&'a str, Vec<u8>>>;

fn image_table(records: &[AnnotationRecord]) -> ImageTable<'_> {
    let mut table: ImageTable<'_> = BTreeMap::new();
    for r in records {
        table
            .entry(r.image_id.as_str())
            .or_default()
            .insert(r.annotator_id.as_str(), r.binarized());
    }
    table
}

/// Agreement statistics over all images labelled by two or more annotators.
///
/// Kappa is always the unweighted mean of pairwise kappas over annotator
/// pairs that share at least two items.
pub fn agreement_report(
    records: &[AnnotationRecord],
    n_attributes: usize,
    mode: AgreementMode,
) -> Result<AgreementReport, AnnotationError> {
    for r in records {
        if r.labels.len() != n_attributes {
            return Err(AnnotationError::LengthMismatch(
                n_attributes,
                r.labels.len(),
            ));
        }
    }
    let table = image_table(records);
    let shared: Vec<_> = table.iter().filter(|(_, by)| by.len() >= 2).collect();
    if shared.is_empty() {
        return Err(AnnotationError::NoOverlap);
    }
    let annotators: BTreeSet<&str> = table.values().flat_map(|by| by.keys().copied()).collect();
    let annotators: Vec<&str> = annotators.into_iter().collect();

    // Pairwise flattened vectors (image-major, attribute-minor).
    let mut pair_stats = Vec::new();
    for (i, &x) in annotators.iter().enumerate() {
        for &y in &annotators[i + 1..] {
            let mut va = Vec::new();
            let mut vb = Vec::new();
            for (_, by) in &shared {
                if let (Some(a), Some(b)) = (by.get(x), by.get(y)) {
                    va.extend_from_slice(a);
                    vb.extend_from_slice(b);
                }
            }
            if !va.is_empty() {
                pair_stats.push((va, vb));
            }
        }
    }
    if pair_stats.is_empty() {
        return Err(AnnotationError::NoOverlap);
    }

    let mut kappa_sum = 0.0;
    let mut kappa_pairs = 0usize;
    let mut degenerate = false;
    for (va, vb) in &pair_stats {
        if va.len() >= 2 {
            let k = cohen_kappa(va, vb)?;
            kappa_sum += k.value;
            kappa_pairs += 1;
            degenerate |= k.degenerate;
        }
    }
    let cohen_kappa = if kappa_pairs == 0 {
        0.0
    } else {
        kappa_sum / kappa_pairs as f64
    };

    let (percent, per_attribute, n_items) = match mode {
        AgreementMode::Pairwise => {
            let mut per_attr = vec![0.0; n_attributes];
            let mut overall = 0.0;
            let mut items = 0;
            for (va, vb) in &pair_stats {
                let images = va.len() / n_attributes.max(1);
                for (j, slot) in per_attr.iter_mut().enumerate() {
                    let same = (0..images)
                        .filter(|&k| va[k * n_attributes + j] == vb[k * n_attributes + j])
                        .count();
                    *slot += same as f64 / images as f64;
                }
                overall += percent_agreement(va, vb)?;
                items += va.len();
            }
            let pairs = pair_stats.len() as f64;
            per_attr.iter_mut().for_each(|v| *v /= pairs);
            (overall / pairs, per_attr, items)
        }
        AgreementMode::Consensus => {
            let mut per_attr = vec![0.0; n_attributes];
            let mut agreed = 0usize;
            for (_, by) in &shared {
                let vectors: Vec<&[u8]> = by.values().map(Vec::as_slice).collect();
                for (j, slot) in per_attr.iter_mut().enumerate() {
                    if vectors.iter().all(|v| v[j] == vectors[0][j]) {
                        *slot += 1.0;
                        agreed += 1;
                    }
                }
            }
            let images = shared.len() as f64;
            per_attr.iter_mut().for_each(|v| *v /= images);
            let items = shared.len() * n_attributes;
            (agreed as f64 / items as f64, per_attr, items)
        }
    };

    Ok(AgreementReport {
        mode,
        percent_agreement: percent,
        cohen_kappa,
        kappa_degenerate: degenerate,
        kappa_aggregation: "pairwise-mean".to_string(),
        per_attribute_agreement: per_attribute,
        n_items,
        n_images: shared.len(),
        n_annotators: annotators.len(),
        n_pairs: pair_stats.len(),
    })
}
