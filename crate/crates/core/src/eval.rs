//! Trajectory and map error metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{OdometryDelta, Point3, Pose2};

/// Association radius for estimated-to-true landmark pairing, meters.
pub const MAP_MATCH_RADIUS_M: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("trajectory lengths differ: estimate {estimate}, ground truth {ground_truth}")]
    LengthMismatch { estimate: usize, ground_truth: usize },
    #[error("empty input")]
    Empty,
    #[error("no estimated landmark could be paired with ground truth")]
    MatchEmpty,
}

/// Root mean squared planar position error, without alignment.
pub fn ate_rmse(estimate: &[Pose2], ground_truth: &[Pose2]) -> Result<f64, EvalError> {
    if estimate.len() != ground_truth.len() {
        return Err(EvalError::LengthMismatch {
            estimate: estimate.len(),
            ground_truth: ground_truth.len(),
        });
    }
    if estimate.is_empty() {
        return Err(EvalError::Empty);
    }
    let sum: f64 = estimate
        .iter()
        .zip(ground_truth)
        .map(|(e, g)| (e.x - g.x).powi(2) + (e.y - g.y).powi(2))
        .sum();
    Ok((sum / estimate.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapError {
    /// Mean Euclidean distance over paired landmarks, meters.
    pub mean_error_m: f64,
    /// Paired estimates divided by all estimates.
    pub matched_fraction: f64,
    /// `(estimate index, ground-truth index, distance)`.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Greedy one-to-one pairing by increasing distance, within
/// [`MAP_MATCH_RADIUS_M`].
pub fn map_error(estimate: &[Point3], ground_truth: &[Point3]) -> Result<MapError, EvalError> {
    if ground_truth.is_empty() {
        return Err(EvalError::Empty);
    }
    if estimate.is_empty() {
        return Err(EvalError::MatchEmpty);
    }
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (i, e) in estimate.iter().enumerate() {
        for (j, g) in ground_truth.iter().enumerate() {
            let d = (e - g).norm();
            if d <= MAP_MATCH_RADIUS_M {
                candidates.push((i, j, d));
            }
        }
    }
    candidates.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_e = vec![false; estimate.len()];
    let mut used_g = vec![false; ground_truth.len()];
    let mut pairs = Vec::new();
    for (i, j, d) in candidates {
        if !used_e[i] && !used_g[j] {
            used_e[i] = true;
            used_g[j] = true;
            pairs.push((i, j, d));
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::MatchEmpty);
    }
    let mean_error_m = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
    Ok(MapError {
        mean_error_m,
        matched_fraction: pairs.len() as f64 / estimate.len() as f64,
        pairs,
    })
}

/// Odometry integrated from `start`; one pose per delta.
pub fn dead_reckoning(start: Pose2, odometry: &[OdometryDelta]) -> Vec<Pose2> {
    let mut pose = start;
    odometry
        .iter()
        .map(|d| {
            pose = pose.compose(d);
            pose
        })
        .collect()
}

/// Absolute heading difference in `[0, π]`.
pub fn heading_error(a: &Pose2, b: &Pose2) -> f64 {
    crate::geom::normalize_angle(a.theta - b.theta).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ate_basics() {
        let gt: Vec<Pose2> = (0..5).map(|i| Pose2::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(ate_rmse(&gt, &gt).unwrap(), 0.0);
        let shifted: Vec<Pose2> = gt.iter().map(|p| Pose2::new(p.x + 0.3, p.y + 0.4, 0.0)).collect();
        assert!((ate_rmse(&shifted, &gt).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(ate_rmse(&gt[..2], &gt), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn map_degenerate_cases() {
        let gt = vec![Point3::new(0.0, 0.0, 1.0), Point3::new(3.0, 0.0, 1.0)];
        let m = map_error(&gt, &gt).unwrap();
        assert_eq!((m.mean_error_m, m.matched_fraction), (0.0, 1.0));
        assert_eq!(map_error(&[], &gt), Err(EvalError::MatchEmpty));
        assert_eq!(
            map_error(&[Point3::new(9.0, 9.0, 9.0)], &gt),
            Err(EvalError::MatchEmpty)
        );
    }

    #[test]
    fn map_pairing_is_one_to_one() {
        let gt = vec![Point3::new(0.0, 0.0, 0.0)];
        let est = vec![Point3::new(0.1, 0.0, 0.0), Point3::new(0.05, 0.0, 0.0)];
        let m = map_error(&est, &gt).unwrap();
        assert_eq!(m.pairs, vec![(1, 0, 0.05)]);
        assert_eq!(m.matched_fraction, 0.5);
    }

    #[test]
    fn dead_reckoning_zero_odometry() {
        let start = Pose2::new(1.0, 2.0, 0.5);
        assert!(dead_reckoning(start, &[OdometryDelta::zero(); 4])
            .iter()
            .all(|p| *p == start));
    }
}
