//! Exhaustive property check over every count combination a registry admits.

use std::fmt;

use serde::Serialize;

use crate::scoring::{bucketize, score_counts, BoundarySet, LevelCounts, SeverityScore};
use crate::taxonomy::{Quad, SeverityLevel, TaxonomyRegistry, NUM_LEVELS};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "property", rename_all = "snake_case")]
pub enum Violation {
    Containment {
        counts: LevelCounts,
        value: f64,
    },
    Dominance {
        higher: LevelCounts,
        higher_value: f64,
        lower: LevelCounts,
        lower_value: f64,
    },
    Monotonicity {
        from: LevelCounts,
        to: LevelCounts,
        from_value: f64,
        to_value: f64,
    },
    BucketRoundTrip {
        counts: LevelCounts,
        value: f64,
        bucket: Option<SeverityLevel>,
    },
    BoundaryAlignment {
        counts: LevelCounts,
        value: f64,
        floor: f64,
    },
    Determinism {
        counts: LevelCounts,
    },
    Scoring {
        counts: LevelCounts,
        message: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Containment { counts, value } => {
                write!(
                    f,
                    "containment: {counts} scored {value} outside its level interval"
                )
            }
            Self::Dominance {
                higher,
                higher_value,
                lower,
                lower_value,
            } => write!(
                f,
                "dominance: {higher} ({higher_value}) does not exceed {lower} ({lower_value})"
            ),
            Self::Monotonicity {
                from,
                to,
                from_value,
                to_value,
            } => write!(
                f,
                "monotonicity: {from} -> {to} went {from_value} -> {to_value}"
            ),
            Self::BucketRoundTrip {
                counts,
                value,
                bucket,
            } => write!(
                f,
                "bucket round-trip: {counts} scored {value} but buckets to {bucket:?}"
            ),
            Self::BoundaryAlignment {
                counts,
                value,
                floor,
            } => write!(
                f,
                "boundary alignment: {counts} scored {value}, expected floor {floor}"
            ),
            Self::Determinism { counts } => write!(
                f,
                "determinism: {counts} scored differently on re-evaluation"
            ),
            Self::Scoring { counts, message } => {
                write!(f, "scoring failed for {counts}: {message}")
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub combinations: u64,
    pub checks: u64,
    pub violations: Vec<Violation>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Every combination `0 ≤ c_i ≤ |A_i|`, in lexicographic order of counts.
pub fn enumerate_combinations(cardinalities: &Quad<u64>) -> Vec<LevelCounts> {
    let mut out = Vec::with_capacity(cardinalities.iter().map(|c| c + 1).product::<u64>() as usize);
    for c1 in 0..=cardinalities[0] {
        for c2 in 0..=cardinalities[1] {
            for c3 in 0..=cardinalities[2] {
                for c4 in 0..=cardinalities[3] {
                    out.push(LevelCounts::new(c1, c2, c3, c4));
                }
            }
        }
    }
    out
}

fn combination_index(counts: &LevelCounts, cardinalities: &Quad<u64>) -> usize {
    counts
        .0
        .iter()
        .zip(cardinalities)
        .fold(0u64, |acc, (&c, &card)| acc * (card + 1) + c) as usize
}

/// Checks interval containment, strict cross-level dominance, within-level
/// strict monotonicity, bucket round-trip, boundary alignment and
/// bit-level determinism for every combination.
pub fn check_registry(registry: &TaxonomyRegistry) -> PropertyReport {
    let cards = registry.cardinalities();
    let weights = registry.weights();
    let bounds = *registry.boundaries();
    check_scorer(&cards, &bounds, |c| {
        score_counts(c, &cards, &weights, &bounds).map_err(|e| e.to_string())
    })
}

/// Runs the property suite against an arbitrary scoring function.
pub fn check_scorer<F>(cards: &Quad<u64>, bounds: &BoundarySet, scorer: F) -> PropertyReport
where
    F: Fn(&LevelCounts) -> Result<SeverityScore, String>,
{
    let cards = *cards;
    let bounds = *bounds;
    let combos = enumerate_combinations(&cards);
    let mut violations = Vec::new();
    let mut checks = 0u64;

    let mut scores: Vec<Option<SeverityScore>> = Vec::with_capacity(combos.len());
    for counts in &combos {
        match scorer(counts) {
            Ok(s) => scores.push(Some(s)),
            Err(e) => {
                violations.push(Violation::Scoring {
                    counts: *counts,
                    message: e,
                });
                scores.push(None);
            }
        }
    }

    // Per-level extremes for the dominance check.
    let mut lo: [Option<(f64, LevelCounts)>; NUM_LEVELS] = [None; NUM_LEVELS];
    let mut hi: [Option<(f64, LevelCounts)>; NUM_LEVELS] = [None; NUM_LEVELS];

    for (counts, score) in combos.iter().zip(&scores) {
        let Some(score) = score else { continue };

        checks += 1;
        let again = scorer(counts).ok();
        if again.map(|s| s.value.to_bits()) != Some(score.value.to_bits()) {
            violations.push(Violation::Determinism { counts: *counts });
        }

        let Some(level) = score.determined_level else {
            checks += 1;
            if score.value != 0.0 {
                violations.push(Violation::Containment {
                    counts: *counts,
                    value: score.value,
                });
            }
            continue;
        };
        let li = level.index();

        checks += 1;
        if !bounds.contains(level, score.value) {
            violations.push(Violation::Containment {
                counts: *counts,
                value: score.value,
            });
        }

        checks += 1;
        let bucket = bucketize(score.value, &bounds).ok();
        if bucket != Some(level) {
            violations.push(Violation::BucketRoundTrip {
                counts: *counts,
                value: score.value,
                bucket,
            });
        }

        if counts.0[li] == 1 && counts.0[li + 1..].iter().all(|&c| c == 0) {
            checks += 1;
            if score.value != bounds.min(level) {
                violations.push(Violation::BoundaryAlignment {
                    counts: *counts,
                    value: score.value,
                    floor: bounds.min(level),
                });
            }
        }

        for k in li..NUM_LEVELS {
            if counts.0[k] >= cards[k] {
                continue;
            }
            let mut next = *counts;
            next.0[k] += 1;
            let Some(next_score) = scores[combination_index(&next, &cards)] else {
                continue;
            };
            checks += 1;
            if next_score.value <= score.value {
                violations.push(Violation::Monotonicity {
                    from: *counts,
                    to: next,
                    from_value: score.value,
                    to_value: next_score.value,
                });
            }
        }

        if lo[li].is_none_or(|(v, _)| score.value < v) {
            lo[li] = Some((score.value, *counts));
        }
        if hi[li].is_none_or(|(v, _)| score.value > v) {
            hi[li] = Some((score.value, *counts));
        }
    }

    for (upper, upper_lo) in lo.iter().enumerate() {
        let Some((upper_min, upper_counts)) = *upper_lo else {
            continue;
        };
        for lower_hi in &hi[upper + 1..] {
            let Some((lower_max, lower_counts)) = *lower_hi else {
                continue;
            };
            checks += 1;
            if upper_min <= lower_max {
                violations.push(Violation::Dominance {
                    higher: upper_counts,
                    higher_value: upper_min,
                    lower: lower_counts,
                    lower_value: lower_max,
                });
            }
        }
    }

    PropertyReport {
        combinations: combos.len() as u64,
        checks,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_registry_passes() {
        let report = check_registry(&TaxonomyRegistry::canonical());
        assert_eq!(report.combinations, 1320);
        assert!(report.passed(), "{:?}", report.first_violation());
    }

    #[test]
    fn index_matches_enumeration_order() {
        let cards = [3, 10, 5, 4];
        for (i, c) in enumerate_combinations(&cards).iter().enumerate() {
            assert_eq!(combination_index(c, &cards), i);
        }
    }

    #[test]
    fn unclamped_formula_collides_at_level_maxima() {
        let reg = TaxonomyRegistry::canonical();
        let cards = reg.cardinalities();
        let weights = reg.weights();
        let bounds = *reg.boundaries();
        let unclamped = |c: &LevelCounts| -> Result<SeverityScore, String> {
            let Some(level) = crate::scoring::determined_level(c) else {
                return Ok(SeverityScore::SAFE);
            };
            let r = crate::scoring::stretched_ratio(c, &cards, &weights).unwrap();
            let (lo, hi) = (bounds.min(level), bounds.max(level));
            Ok(SeverityScore {
                value: lo + (hi - lo) * r.sqrt(),
                determined_level: Some(level),
            })
        };
        let report = check_scorer(&cards, &bounds, unclamped);
        assert!(!report.passed());
        // (0,10,5,4) lands exactly on 0.711, the L1 floor.
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::Containment { counts, .. } if *counts == LevelCounts::new(0, 10, 5, 4)
        )));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Dominance { .. })));
    }

    #[test]
    fn scorer_errors_are_reported() {
        let cards = [1, 1, 1, 1];
        let report = check_scorer(&cards, &BoundarySet::canonical(), |_| Err("boom".into()));
        assert_eq!(report.combinations, 16);
        assert_eq!(report.violations.len(), 16);
    }

    #[test]
    fn small_registry_passes() {
        let reg = TaxonomyRegistry::canonical().with_minimal_weights();
        let report = check_registry(&reg);
        assert!(report.passed());
    }
}
