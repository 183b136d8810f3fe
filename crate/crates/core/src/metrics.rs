//! Evaluation metrics for predicted severity scores.
//!
//! Correlations and error sums are accumulated sequentially in record order so
//! results do not depend on the worker count. Parallel work is limited to
//! integer counting (level buckets, concordant pairs).

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::{bucketize, BoundarySet};
use crate::taxonomy::{SeverityLevel, NUM_LEVELS};

/// Default cap on curated pairs per mode.
pub const DEFAULT_MAX_PAIRS: usize = 10_000;

/// Above this many eligible pairs, sampling switches from materialising every
/// pair to rejection sampling.
const MATERIALISE_LIMIT: u64 = 4_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("inputs differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no records")]
    Empty,
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("input is constant; correlation is undefined")]
    ConstantInput,
    #[error("no pairs to score")]
    EmptyPairs,
    #[error("pair ({0}, {1}) has tied ground truth")]
    TiedGroundTruth(usize, usize),
    #[error("pair ({0}, {1}) is out of bounds")]
    PairOutOfBounds(usize, usize),
    #[error("no eligible {0} pairs")]
    NoEligiblePairs(PairMode),
    #[error("score {0} is outside [0, 1]")]
    OutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub image_id: String,
    pub gt_score: f64,
    pub gt_level: Option<SeverityLevel>,
    pub pred_score: f64,
}

impl EvaluationRecord {
    /// Ground-truth level for level-based metrics; attribute-free ("safe")
    /// images fall in the level-4 bucket.
    pub fn effective_level(&self) -> SeverityLevel {
        self.gt_level.unwrap_or(SeverityLevel::L4)
    }
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<(), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    Ok(())
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|v| *v == x[0])
}

/// Pearson product-moment correlation (two-pass, centred sums).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(x, y)?;
    if x.len() < 2 {
        return Err(MetricsError::TooFew {
            needed: 2,
            got: x.len(),
        });
    }
    if is_constant(x) || is_constant(y) {
        return Err(MetricsError::ConstantInput);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Mean absolute error and mean signed error `pred − gt`.
pub fn mae_and_bias(pred: &[f64], gt: &[f64]) -> Result<(f64, f64), MetricsError> {
    check_lengths(pred, gt)?;
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = pred.len() as f64;
    let mut abs = 0.0;
    let mut signed = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        abs += (p - g).abs();
        signed += p - g;
    }
    Ok((abs / n, signed / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Pairs whose ground-truth levels differ.
    Inter,
    /// Pairs at the same ground-truth level with different scores.
    Intra,
}

impl std::fmt::Display for PairMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Inter => "inter-level",
            Self::Intra => "intra-level",
        })
    }
}

fn eligible(records: &[EvaluationRecord], mode: PairMode, i: usize, j: usize) -> bool {
    let (a, b) = (&records[i], &records[j]);
    match mode {
        PairMode::Inter => a.effective_level() != b.effective_level(),
        PairMode::Intra => a.effective_level() == b.effective_level() && a.gt_score != b.gt_score,
    }
}

fn eligible_pairs(
    records: &[EvaluationRecord],
    mode: PairMode,
) -> impl Iterator<Item = (usize, usize)> + '_ {
    let n = records.len();
    (0..n)
        .flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
        .filter(move |&(i, j)| eligible(records, mode, i, j))
}

/// Curated pairs `(i, j)` with `i < j`, sorted.
///
/// Every eligible pair is returned when there are at most `max_pairs`;
/// otherwise `max_pairs` of them are drawn uniformly without replacement
/// from `rng`.
pub fn curate_pairs<R: Rng + ?Sized>(
    records: &[EvaluationRecord],
    mode: PairMode,
    max_pairs: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>, MetricsError> {
    if records.len() < 2 {
        return Err(MetricsError::TooFew {
            needed: 2,
            got: records.len(),
        });
    }
    let total = eligible_pairs(records, mode).count() as u64;
    if total == 0 {
        return Err(MetricsError::NoEligiblePairs(mode));
    }
    if total <= max_pairs as u64 {
        return Ok(eligible_pairs(records, mode).collect());
    }
    let mut pairs = if total <= MATERIALISE_LIMIT {
        let all: Vec<_> = eligible_pairs(records, mode).collect();
        index::sample(rng, all.len(), max_pairs)
            .into_iter()
            .map(|k| all[k])
            .collect::<Vec<_>>()
    } else {
        let n = records.len();
        let mut seen = HashSet::with_capacity(max_pairs);
        let mut out = Vec::with_capacity(max_pairs);
        while out.len() < max_pairs {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let (i, j) = if i < j { (i, j) } else { (j, i) };
            if i != j && eligible(records, mode, i, j) && seen.insert((i, j)) {
                out.push((i, j));
            }
        }
        out
    };
    pairs.sort_unstable();
    Ok(pairs)
}

/// Number of eligible pairs for `mode` without materialising them.
pub fn count_eligible_pairs(records: &[EvaluationRecord], mode: PairMode) -> u64 {
    eligible_pairs(records, mode).count() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub accuracy: f64,
    pub concordant: u64,
    pub total: u64,
}

/// Fraction of pairs with `(gt_i − gt_j)(pred_i − pred_j) > 0`. Predicted ties
/// are not concordant.
pub fn pairwise_accuracy(
    pairs: &[(usize, usize)],
    pred: &[f64],
    gt: &[f64],
) -> Result<PairwiseResult, MetricsError> {
    check_lengths(pred, gt)?;
    if pairs.is_empty() {
        return Err(MetricsError::EmptyPairs);
    }
    for &(i, j) in pairs {
        if i >= gt.len() || j >= gt.len() {
            return Err(MetricsError::PairOutOfBounds(i, j));
        }
        if gt[i] == gt[j] {
            return Err(MetricsError::TiedGroundTruth(i, j));
        }
    }
    let concordant = pairs
        .par_iter()
        .filter(|&&(i, j)| (gt[i] - gt[j]) * (pred[i] - pred[j]) > 0.0)
        .count() as u64;
    let total = pairs.len() as u64;
    Ok(PairwiseResult {
        accuracy: concordant as f64 / total as f64,
        concordant,
        total,
    })
}

pub type ConfusionMatrix = [[u64; NUM_LEVELS]; NUM_LEVELS];

/// Rows are ground-truth levels (safe counted as L4), columns the bucket of
/// the predicted score.
pub fn confusion_matrix(
    records: &[EvaluationRecord],
    boundaries: &BoundarySet,
) -> Result<ConfusionMatrix, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let cells = records
        .par_iter()
        .map(|r| {
            let predicted = bucketize(r.pred_score, boundaries)
                .map_err(|_| MetricsError::OutOfRange(r.pred_score))?;
            Ok((r.effective_level().index(), predicted.index()))
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let mut m = [[0u64; NUM_LEVELS]; NUM_LEVELS];
    for (row, col) in cells {
        m[row][col] += 1;
    }
    Ok(m)
}

/// Fraction of records whose predicted bucket equals the ground-truth level.
pub fn level_accuracy(
    records: &[EvaluationRecord],
    boundaries: &BoundarySet,
) -> Result<f64, MetricsError> {
    let m = confusion_matrix(records, boundaries)?;
    let trace: u64 = (0..NUM_LEVELS).map(|i| m[i][i]).sum();
    Ok(trace as f64 / records.len() as f64)
}

/// Confusion matrix as CSV with a header row of predicted levels.
pub fn confusion_csv(m: &ConfusionMatrix) -> String {
    let mut out = String::from("gt\\pred,L1,L2,L3,L4\n");
    for (i, row) in m.iter().enumerate() {
        out.push_str(&format!(
            "L{},{},{},{},{}\n",
            i + 1,
            row[0],
            row[1],
            row[2],
            row[3]
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairCounts {
    pub inter: u64,
    pub intra: u64,
    pub inter_eligible: u64,
    pub intra_eligible: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub max_pairs: usize,
    pub boundary_source: String,
    pub boundaries: BoundarySet,
    pub tool_version: String,
    pub pair_sampling: String,
    pub spearman_ties: String,
    pub safe_level_mapping: String,
}

/// Full metric bundle. Correlations and pair accuracies are `null` when
/// undefined for the input (constant series, no eligible pairs); the reason
/// is listed in `warnings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub mae: f64,
    pub bias: f64,
    pub level_accuracy: f64,
    pub inter_acc: Option<f64>,
    pub intra_acc: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub gt_safe_count: usize,
    pub pair_counts: PairCounts,
    pub warnings: Vec<String>,
    pub metadata: ReportMetadata,
}

#[derive(Debug, Clone)]
pub struct EvaluationConfig {
    pub seed: u64,
    pub max_pairs: usize,
    pub boundary_source: String,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_pairs: DEFAULT_MAX_PAIRS,
            boundary_source: "canonical".to_string(),
        }
    }
}

fn optional<T>(
    result: Result<T, MetricsError>,
    what: &str,
    warnings: &mut Vec<String>,
) -> Result<Option<T>, MetricsError> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(
            e @ (MetricsError::ConstantInput
            | MetricsError::NoEligiblePairs(_)
            | MetricsError::TooFew { .. }),
        ) => {
            warnings.push(format!("{what}: {e}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Computes every metric over `records`.
///
/// Inter-level pairs are drawn before intra-level pairs from one ChaCha8
/// stream seeded with `config.seed`.
pub fn evaluate(
    records: &[EvaluationRecord],
    boundaries: &BoundarySet,
    config: &EvaluationConfig,
) -> Result<MetricsReport, MetricsError> {
    use rand::SeedableRng;

    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    for r in records {
        for v in [r.gt_score, r.pred_score] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MetricsError::OutOfRange(v));
            }
        }
    }
    let gt: Vec<f64> = records.iter().map(|r| r.gt_score).collect();
    let pred: Vec<f64> = records.iter().map(|r| r.pred_score).collect();
    let mut warnings = Vec::new();

    let pearson = optional(pearson(&pred, &gt), "pearson", &mut warnings)?;
    let spearman = optional(spearman(&pred, &gt), "spearman", &mut warnings)?;
    let (mae, bias) = mae_and_bias(&pred, &gt)?;
    let confusion = confusion_matrix(records, boundaries)?;
    let trace: u64 = (0..NUM_LEVELS).map(|i| confusion[i][i]).sum();
    let level_accuracy = trace as f64 / records.len() as f64;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let mut pair_counts = PairCounts::default();
    let mut pair_metric =
        |mode: PairMode, warnings: &mut Vec<String>| -> Result<Option<f64>, MetricsError> {
            let eligible = count_eligible_pairs(records, mode);
            let pairs = optional(
                curate_pairs(records, mode, config.max_pairs, &mut rng),
                &mode.to_string(),
                warnings,
            )?;
            let Some(pairs) = pairs else { return Ok(None) };
            let result = pairwise_accuracy(&pairs, &pred, &gt)?;
            match mode {
                PairMode::Inter => {
                    pair_counts.inter = result.total;
                    pair_counts.inter_eligible = eligible;
                }
                PairMode::Intra => {
                    pair_counts.intra = result.total;
                    pair_counts.intra_eligible = eligible;
                }
            }
            Ok(Some(result.accuracy))
        };
    let inter_acc = pair_metric(PairMode::Inter, &mut warnings)?;
    let intra_acc = pair_metric(PairMode::Intra, &mut warnings)?;

    Ok(MetricsReport {
        n: records.len(),
        pearson,
        spearman,
        mae,
        bias,
        level_accuracy,
        inter_acc,
        intra_acc,
        confusion,
        gt_safe_count: records.iter().filter(|r| r.gt_level.is_none()).count(),
        pair_counts,
        warnings,
        metadata: ReportMetadata {
            seed: config.seed,
            max_pairs: config.max_pairs,
            boundary_source: config.boundary_source.clone(),
            boundaries: *boundaries,
            tool_version: crate::VERSION.to_string(),
            pair_sampling:
                "exhaustive when eligible <= max_pairs, else uniform without replacement (chacha8)"
                    .to_string(),
            spearman_ties: "average".to_string(),
            safe_level_mapping: "safe -> L4".to_string(),
        },
    })
}
