//! Record files: annotations, ground truth, predictions and reports.
//!
//! Record streams are JSON Lines. Ingestion is strict: the first malformed
//! line aborts loading with its 1-based line number.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{
    majority_vote_vectors, merge_dual_labels, AnnotationError, AnnotationRecord, Label,
};
use crate::boundary::TrainingSample;
use crate::metrics::{EvaluationRecord, MetricsReport};
use crate::scoring::{score_attribute_vector, ScoringError};
use crate::taxonomy::{SeverityLevel, TaxonomyRegistry};

/// Allowed gap between a stored ground-truth score and its recomputation.
pub const GT_SCORE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ResponseError {
    #[error("empty response")]
    EmptyText,
    #[error("no score found in response")]
    NoScoreFound,
    #[error("score {0} is outside [0, 1]")]
    OutOfRange(f64),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown attribute id `{id}`")]
    UnknownAttribute { line: usize, id: String },
    #[error("line {line}: label value {value} is not one of 0, 0.5, 1")]
    BadLabelValue { line: usize, value: f64 },
    #[error("line {line}: duplicate record for {key}")]
    DuplicateRecord { line: usize, key: String },
    #[error("line {line}: attribute vector has length {got}, expected {expected}")]
    LengthMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: stored gt_score {stored} does not match recomputed {recomputed}")]
    ScoreMismatch {
        line: usize,
        stored: f64,
        recomputed: f64,
    },
    #[error("line {line}: stored gt_level {stored:?} does not match recomputed {recomputed:?}")]
    LevelMismatch {
        line: usize,
        stored: Option<SeverityLevel>,
        recomputed: Option<SeverityLevel>,
    },
    #[error("line {line}: {source}")]
    Response { line: usize, source: ResponseError },
    #[error("line {line}: score {value} is outside [0, 1]")]
    OutOfRange { line: usize, value: f64 },
    #[error("line {line}: {source}")]
    Scoring { line: usize, source: ScoringError },
    #[error("image `{0}` is missing an annotator for dual merging")]
    MissingAnnotator(String),
    #[error("image `{image_id}` has {annotators} annotators; mode `{mode}` expects {expected}")]
    ModeMismatch {
        image_id: String,
        annotators: usize,
        mode: GtMode,
        expected: &'static str,
    },
    #[error("annotation: {0}")]
    Annotation(#[from] AnnotationError),
    #[error("{} prediction id(s) not in ground truth: {}", .0.len(), .0.join(", "))]
    UnknownPredictionIds(Vec<String>),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Non-blank lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("serialisable");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn parse_line<T: for<'de> Deserialize<'de>>(line: usize, text: &str) -> Result<T, DatasetError> {
    serde_json::from_str(text).map_err(|e| DatasetError::Parse {
        line,
        message: e.to_string(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationLine {
    image_id: String,
    annotator_id: String,
    labels: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rationale: Option<BTreeMap<String, String>>,
}

fn annotation_from_line(
    line: usize,
    raw: AnnotationLine,
    registry: &TaxonomyRegistry,
) -> Result<AnnotationRecord, DatasetError> {
    // Attributes not mentioned on the line are absent.
    let mut labels = vec![Label::Absent; registry.len()];
    for (id, value) in &raw.labels {
        let pos = registry
            .position(id)
            .ok_or_else(|| DatasetError::UnknownAttribute {
                line,
                id: id.clone(),
            })?;
        labels[pos] = Label::from_value(*value).map_err(|_| DatasetError::BadLabelValue {
            line,
            value: *value,
        })?;
    }
    let rationale = raw.rationale.unwrap_or_default();
    if let Some(id) = rationale.keys().find(|id| registry.position(id).is_none()) {
        return Err(DatasetError::UnknownAttribute {
            line,
            id: id.clone(),
        });
    }
    Ok(AnnotationRecord {
        image_id: raw.image_id,
        annotator_id: raw.annotator_id,
        labels,
        rationale,
    })
}

/// Reads an annotation file: one `{image_id, annotator_id, labels, rationale?}`
/// object per line.
pub fn load_annotations(
    path: impl AsRef<Path>,
    registry: &TaxonomyRegistry,
) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, text) in read_lines(path.as_ref())? {
        let raw: AnnotationLine = parse_line(line, &text)?;
        let record = annotation_from_line(line, raw, registry)?;
        if !seen.insert((record.image_id.clone(), record.annotator_id.clone())) {
            return Err(DatasetError::DuplicateRecord {
                line,
                key: format!(
                    "image `{}` / annotator `{}`",
                    record.image_id, record.annotator_id
                ),
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_annotations(
    path: impl AsRef<Path>,
    records: &[AnnotationRecord],
    registry: &TaxonomyRegistry,
) -> Result<(), DatasetError> {
    let lines: Vec<AnnotationLine> = records
        .iter()
        .map(|r| AnnotationLine {
            image_id: r.image_id.clone(),
            annotator_id: r.annotator_id.clone(),
            labels: registry
                .attributes()
                .iter()
                .zip(&r.labels)
                .map(|(a, l)| (a.id.clone(), l.value()))
                .collect(),
            rationale: (!r.rationale.is_empty()).then(|| r.rationale.clone()),
        })
        .collect();
    write_lines(path.as_ref(), &lines)
}

/// How annotators are combined into a binary vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GtMode {
    /// Exactly two annotators; keep attributes both mark present.
    Dual,
    /// Any number of annotators; strict majority, ties to absent.
    Majority,
}

impl std::fmt::Display for GtMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Dual => "dual",
            Self::Majority => "majority",
        })
    }
}

/// One image's merged attributes and derived ground-truth score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub attributes: Vec<u8>,
    pub gt_score: f64,
    pub gt_level: Option<SeverityLevel>,
    #[serde(default)]
    pub source_split: String,
}

impl ImageRecord {
    pub fn to_training_sample(&self) -> Option<TrainingSample> {
        Some(TrainingSample {
            attributes: self.attributes.clone(),
            max_level: self.gt_level?,
        })
    }
}

/// Merges annotations per image and scores the merged vectors. Output is
/// sorted by image id.
pub fn build_ground_truth(
    annotations: &[AnnotationRecord],
    registry: &TaxonomyRegistry,
    mode: GtMode,
    source_split: &str,
) -> Result<Vec<ImageRecord>, DatasetError> {
    let mut by_image: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for a in annotations {
        by_image.entry(a.image_id.as_str()).or_default().push(a);
    }
    let mut out = Vec::with_capacity(by_image.len());
    for (image_id, mut recs) in by_image {
        recs.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
        let attributes = match mode {
            GtMode::Dual => match recs.as_slice() {
                [a, b] => merge_dual_labels(&a.labels, &b.labels)?,
                [_] => return Err(DatasetError::MissingAnnotator(image_id.to_string())),
                _ => {
                    return Err(DatasetError::ModeMismatch {
                        image_id: image_id.to_string(),
                        annotators: recs.len(),
                        mode,
                        expected: "exactly 2",
                    })
                }
            },
            GtMode::Majority => {
                let vectors: Vec<Vec<u8>> = recs.iter().map(|r| r.binarized()).collect();
                majority_vote_vectors(&vectors)?
            }
        };
        let score = score_attribute_vector(&attributes, registry)
            .map_err(|source| DatasetError::Scoring { line: 0, source })?;
        out.push(ImageRecord {
            image_id: image_id.to_string(),
            attributes,
            gt_score: score.value,
            gt_level: score.determined_level,
            source_split: source_split.to_string(),
        });
    }
    Ok(out)
}

pub fn write_ground_truth(
    path: impl AsRef<Path>,
    records: &[ImageRecord],
) -> Result<(), DatasetError> {
    write_lines(path.as_ref(), records)
}

/// Loads ground truth. With a registry, every record's score and level are
/// recomputed from its attributes and must match.
pub fn load_ground_truth(
    path: impl AsRef<Path>,
    registry: Option<&TaxonomyRegistry>,
) -> Result<Vec<ImageRecord>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, text) in read_lines(path.as_ref())? {
        let rec: ImageRecord = parse_line(line, &text)?;
        if !(0.0..=1.0).contains(&rec.gt_score) {
            return Err(DatasetError::OutOfRange {
                line,
                value: rec.gt_score,
            });
        }
        if !seen.insert(rec.image_id.clone()) {
            return Err(DatasetError::DuplicateRecord {
                line,
                key: format!("image `{}`", rec.image_id),
            });
        }
        if let Some(reg) = registry {
            if rec.attributes.len() != reg.len() {
                return Err(DatasetError::LengthMismatch {
                    line,
                    expected: reg.len(),
                    got: rec.attributes.len(),
                });
            }
            let s = score_attribute_vector(&rec.attributes, reg)
                .map_err(|source| DatasetError::Scoring { line, source })?;
            if (s.value - rec.gt_score).abs() > GT_SCORE_TOLERANCE {
                return Err(DatasetError::ScoreMismatch {
                    line,
                    stored: rec.gt_score,
                    recomputed: s.value,
                });
            }
            if s.determined_level != rec.gt_level {
                return Err(DatasetError::LevelMismatch {
                    line,
                    stored: rec.gt_level,
                    recomputed: s.determined_level,
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

fn decimal_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?(?:\d+\.\d+|\.\d+|\d+)").expect("valid pattern"))
}

fn score_field(value: &serde_json::Value) -> Option<f64> {
    match value.get("score")? {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Extracts a severity score from free-form model output.
///
/// If the text is a JSON object with a `score` field, that value is used.
/// Otherwise the first number written with a decimal point that lies in
/// `[0, 1]` wins (`0.85`, `.85`); failing that, the first bare `0` or `1`. A
/// response whose only numbers lie outside `[0, 1]` is `OutOfRange` with
/// the first of them.
pub fn parse_model_response(text: &str) -> Result<f64, ResponseError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(ResponseError::EmptyText);
    }
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(trimmed) {
        if let Some(score) = score_field(&value) {
            return if (0.0..=1.0).contains(&score) {
                Ok(score)
            } else {
                Err(ResponseError::OutOfRange(score))
            };
        }
    }
    let mut first_seen = None;
    let mut first_integer = None;
    for m in decimal_pattern().find_iter(trimmed) {
        let Ok(v) = m.as_str().parse::<f64>() else {
            continue;
        };
        first_seen.get_or_insert(v);
        if !(0.0..=1.0).contains(&v) {
            continue;
        }
        if m.as_str().contains('.') {
            return Ok(v);
        }
        first_integer.get_or_insert(v);
    }
    match (first_integer, first_seen) {
        (Some(v), _) => Ok(v),
        (None, Some(v)) => Err(ResponseError::OutOfRange(v)),
        (None, None) => Err(ResponseError::NoScoreFound),
    }
}

#[derive(Debug, Deserialize)]
struct PredictionLine {
    image_id: String,
    #[serde(default)]
    score: Option<f64>,
    #[serde(default)]
    raw_response: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: String,
    pub score: f64,
}

/// Loads `{image_id, score}` or `{image_id, raw_response}` lines. Scores
/// outside `[0, 1]` are rejected, never clamped.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, text) in read_lines(path.as_ref())? {
        let raw: PredictionLine = parse_line(line, &text)?;
        let score = match (raw.score, raw.raw_response) {
            (Some(s), _) => s,
            (None, Some(resp)) => parse_model_response(&resp)
                .map_err(|source| DatasetError::Response { line, source })?,
            (None, None) => {
                return Err(DatasetError::Parse {
                    line,
                    message: "expected `score` or `raw_response`".into(),
                })
            }
        };
        if !(0.0..=1.0).contains(&score) {
            return Err(DatasetError::OutOfRange { line, value: score });
        }
        if !seen.insert(raw.image_id.clone()) {
            return Err(DatasetError::DuplicateRecord {
                line,
                key: format!("image `{}`", raw.image_id),
            });
        }
        out.push(Prediction {
            image_id: raw.image_id,
            score,
        });
    }
    Ok(out)
}

pub fn write_predictions(
    path: impl AsRef<Path>,
    predictions: &[Prediction],
) -> Result<(), DatasetError> {
    write_lines(path.as_ref(), predictions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinedRecords {
    pub records: Vec<EvaluationRecord>,
    /// Ground-truth images without a prediction.
    pub missing_predictions: Vec<String>,
}

/// Pairs predictions with ground truth in ground-truth order. Predictions for
/// unknown images are an error; images without predictions are reported and
/// left out.
pub fn join_records(
    ground_truth: &[ImageRecord],
    predictions: &[Prediction],
) -> Result<JoinedRecords, DatasetError> {
    let gt_ids: HashSet<&str> = ground_truth.iter().map(|g| g.image_id.as_str()).collect();
    let unknown: Vec<String> = predictions
        .iter()
        .filter(|p| !gt_ids.contains(p.image_id.as_str()))
        .map(|p| p.image_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(DatasetError::UnknownPredictionIds(unknown));
    }
    let by_id: HashMap<&str, f64> = predictions
        .iter()
        .map(|p| (p.image_id.as_str(), p.score))
        .collect();
    let mut records = Vec::with_capacity(predictions.len());
    let mut missing = Vec::new();
    for g in ground_truth {
        match by_id.get(g.image_id.as_str()) {
            Some(&pred_score) => records.push(EvaluationRecord {
                image_id: g.image_id.clone(),
                gt_score: g.gt_score,
                gt_level: g.gt_level,
                pred_score,
            }),
            None => missing.push(g.image_id.clone()),
        }
    }
    Ok(JoinedRecords {
        records,
        missing_predictions: missing,
    })
}

/// Pretty-printed report JSON; field order is fixed by the struct.
pub fn report_json(report: &MetricsReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("serialisable");
    text.push('\n');
    text
}

pub fn write_report(path: impl AsRef<Path>, report: &MetricsReport) -> Result<(), DatasetError> {
    let path = path.as_ref();
    std::fs::write(path, report_json(report)).map_err(io_err(path))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<MetricsReport, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_line(1, &text)
}
