//! Two-component PCA of embedded samples, for external plotting.

use std::fmt::Write as _;

use super::embedding::dot;
use super::EmbeddedSample;

const POWER_ITERATIONS: usize = 500;

fn covariance(points: &[&[f64]], dim: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(*p) {
            *m += v / n;
        }
    }
    let mut cov = vec![vec![0.0; dim]; dim];
    for p in points {
        for i in 0..dim {
            let di = p[i] - mean[i];
            for j in 0..dim {
                cov[i][j] += di * (p[j] - mean[j]) / n;
            }
        }
    }
    (mean, cov)
}

fn leading_eigenvector(cov: &[Vec<f64>]) -> Vec<f64> {
    let dim = cov.len();
    // Fixed, non-degenerate start so results are reproducible.
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + i as f64 / dim as f64).collect();
    for _ in 0..POWER_ITERATIONS {
        let mut next: Vec<f64> = cov.iter().map(|row| dot(row, &v)).collect();
        let norm = dot(&next, &next).sqrt();
        if norm == 0.0 {
            break;
        }
        next.iter_mut().for_each(|x| *x /= norm);
        v = next;
    }
    v
}

/// Projects samples onto the top two principal components.
pub fn pca_2d(samples: &[EmbeddedSample]) -> Vec<[f64; 2]> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let dim = first.z.len();
    let points: Vec<&[f64]> = samples.iter().map(|s| s.z.as_slice()).collect();
    let (mean, mut cov) = covariance(&points, dim);
    let pc1 = leading_eigenvector(&cov);
    let lambda1 = dot(
        &pc1,
        &cov.iter().map(|row| dot(row, &pc1)).collect::<Vec<_>>(),
    );
    for i in 0..dim {
        for j in 0..dim {
            cov[i][j] -= lambda1 * pc1[i] * pc1[j];
        }
    }
    let pc2 = leading_eigenvector(&cov);
    points
        .iter()
        .map(|p| {
            let centred: Vec<f64> = p.iter().zip(&mean).map(|(x, m)| x - m).collect();
            [dot(&centred, &pc1), dot(&centred, &pc2)]
        })
        .collect()
}

/// CSV with columns `index,level,pc1,pc2`.
pub fn projection_csv(samples: &[EmbeddedSample]) -> String {
    let mut out = String::from("index,level,pc1,pc2\n");
    for (i, (s, [a, b])) in samples.iter().zip(pca_2d(samples)).enumerate() {
        let _ = writeln!(out, "{i},{},{a},{b}", s.level.number());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::SeverityLevel;

    #[test]
    fn recovers_dominant_axis() {
        let samples: Vec<_> = (0..20)
            .map(|k| {
                let t = k as f64 - 9.5;
                EmbeddedSample {
                    z: vec![3.0 * t, 0.1 * (k % 3) as f64, 0.0],
                    level: SeverityLevel::L2,
                }
            })
            .collect();
        let proj = pca_2d(&samples);
        // First component spans the x spread; second is tiny.
        let spread1 = proj.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
        let spread2 = proj.iter().map(|p| p[1].abs()).fold(0.0, f64::max);
        assert!(spread1 > 25.0 && spread2 < 0.2);
        let csv = projection_csv(&samples);
        assert!(csv.starts_with("index,level,pc1,pc2\n0,2,"));
        assert_eq!(csv.lines().count(), 21);
    }
}
