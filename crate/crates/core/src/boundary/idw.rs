//! Inverse distance weighting over embedded samples.

use serde::{Deserialize, Serialize};

use super::BoundaryError;
use crate::taxonomy::SeverityLevel;

/// Default `ε` in `1/(‖z − z_j‖² + ε)`.
pub const DEFAULT_IDW_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedSample {
    pub z: Vec<f64>,
    pub level: SeverityLevel,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Weighted mean of reference levels with weights `1/(‖z − z_j‖² + eps)`.
///
/// `exclude` drops one reference by index, which gives leave-one-out scores
/// when the query is itself a reference.
pub fn idw_score(
    z: &[f64],
    refs: &[EmbeddedSample],
    eps: f64,
    exclude: Option<usize>,
) -> Result<f64, BoundaryError> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut used = 0usize;
    for (j, r) in refs.iter().enumerate() {
        if Some(j) == exclude {
            continue;
        }
        if r.z.len() != z.len() {
            return Err(BoundaryError::DimensionMismatch {
                expected: z.len(),
                got: r.z.len(),
            });
        }
        let w = 1.0 / (squared_distance(z, &r.z) + eps);
        num += w * f64::from(r.level.number());
        den += w;
        used += 1;
    }
    if used == 0 {
        return Err(BoundaryError::EmptyReferences);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn r(z: Vec<f64>, l: SeverityLevel) -> EmbeddedSample {
        EmbeddedSample { z, level: l }
    }

    #[test]
    fn one_point_field() {
        let refs = [r(vec![0.3, 0.4], SeverityLevel::L2)];
        assert_abs_diff_eq!(
            idw_score(&[0.3, 0.4], &refs, 1e-8, None).unwrap(),
            2.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn equidistant_pair_averages() {
        let refs = [
            r(vec![1.0, 0.0], SeverityLevel::L1),
            r(vec![-1.0, 0.0], SeverityLevel::L3),
        ];
        assert_abs_diff_eq!(
            idw_score(&[0.0, 1.0], &refs, 1e-8, None).unwrap(),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn hand_weighted_mean() {
        // Squared distances 1 and 3 to levels 1 and 3: (1 + 1)/(1 + 1/3) = 1.5.
        let refs = [
            r(vec![1.0, 0.0], SeverityLevel::L1),
            r(vec![0.0, 3f64.sqrt()], SeverityLevel::L3),
        ];
        assert_abs_diff_eq!(
            idw_score(&[0.0, 0.0], &refs, 0.0, None).unwrap(),
            1.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            idw_score(&[0.0, 0.0], &refs, 1e-12, None).unwrap(),
            1.5,
            epsilon = 1e-9
        );
    }

    #[test]
    fn exclusion_and_empty() {
        let refs = [
            r(vec![0.0], SeverityLevel::L1),
            r(vec![1.0], SeverityLevel::L4),
        ];
        assert_abs_diff_eq!(
            idw_score(&[0.0], &refs, 1e-8, Some(0)).unwrap(),
            4.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            idw_score(&[0.0], &[], 1e-8, None),
            Err(BoundaryError::EmptyReferences)
        ));
        assert!(matches!(
            idw_score(&[0.0], &refs[..1], 1e-8, Some(0)),
            Err(BoundaryError::EmptyReferences)
        ));
        assert!(matches!(
            idw_score(&[0.0, 1.0], &refs, 1e-8, None),
            Err(BoundaryError::DimensionMismatch { .. })
        ));
    }
}
