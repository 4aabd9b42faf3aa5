//! Object orientation and top-down grasp poses from 2-D point sets.
//!
//! A segmentation mask is reduced to its principal axes: the grasp centers
//! on the centroid, the yaw follows the major axis, and the gripper closes
//! across the minor axis. The 2x2 eigenproblem is solved in closed form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    /// All points coincide; no orientation exists.
    #[error("degenerate covariance: all points identical")]
    DegenerateCovariance,
    #[error("non-finite coordinate in point set")]
    NonFinitePoint,
}

/// Top-down pick configuration in pixel coordinates.
///
/// `yaw` is the major-axis angle folded into `[-pi/2, pi/2)`; a parallel-jaw
/// grasp is symmetric under 180 degrees, so the fold loses nothing. Extents
/// are `2 * sqrt(eigenvalue)` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub center: (f64, f64),
    pub yaw: f64,
    pub width_extent: f64,
    pub length_extent: f64,
    /// Set when the eigenvalues are equal within tolerance; yaw is then
    /// reported as 0 by convention.
    pub isotropic: bool,
}

/// Folds an angle into `[-pi/2, pi/2)`.
fn fold_half_circle(mut angle: f64) -> f64 {
    use std::f64::consts::PI;
    while angle >= PI / 2.0 {
        angle -= PI;
    }
    while angle < -PI / 2.0 {
        angle += PI;
    }
    angle
}

/// Principal-component grasp: centroid, major-axis yaw, and per-axis
/// extents from the population covariance of the points.
pub fn pca_grasp(points: &[(f64, f64)]) -> Result<GraspPose, SceneError> {
    if points.len() < 3 {
        return Err(SceneError::TooFewPoints(points.len()));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(SceneError::NonFinitePoint);
    }

    let n = points.len() as f64;
    let cx = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let cy = points.iter().map(|(_, y)| y).sum::<f64>() / n;

    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in points {
        let dx = x - cx;
        let dy = y - cy;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxx /= n;
    syy /= n;
    sxy /= n;

    // Closed-form eigenvalues of [[sxx, sxy], [sxy, syy]].
    let trace = sxx + syy;
    let half_gap = ((sxx - syy) / 2.0).hypot(sxy);
    let lambda_max = trace / 2.0 + half_gap;
    let lambda_min = (trace / 2.0 - half_gap).max(0.0);

    // Identical points leave only rounding residue in the covariance.
    if lambda_max <= 1e-18 * (1.0 + cx * cx + cy * cy) {
        return Err(SceneError::DegenerateCovariance);
    }

    let isotropic = lambda_max - lambda_min <= 1e-9 * lambda_max;
    let yaw = if isotropic {
        0.0
    } else {
        fold_half_circle(0.5 * (2.0 * sxy).atan2(sxx - syy))
    };

    Ok(GraspPose {
        center: (cx, cy),
        yaw,
        width_extent: 2.0 * lambda_min.sqrt(),
        length_extent: 2.0 * lambda_max.sqrt(),
        isotropic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    /// 4:1 axis-aligned ellipse boundary samples rotated by `theta`.
    pub(crate) fn rotated_ellipse(theta: f64, samples: usize) -> Vec<(f64, f64)> {
        (0..samples)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / samples as f64;
                let (x, y) = (4.0 * t.cos(), t.sin());
                (
                    x * theta.cos() - y * theta.sin(),
                    x * theta.sin() + y * theta.cos(),
                )
            })
            .collect()
    }

    #[test]
    fn diagonal_line_has_quarter_pi_yaw() {
        let points = vec![(-1.0, -1.0), (0.0, 0.0), (1.0, 1.0)];
        let pose = pca_grasp(&points).unwrap();
        assert!((pose.yaw - FRAC_PI_4).abs() < 1e-9);
        assert!((pose.center.0).abs() < 1e-12 && (pose.center.1).abs() < 1e-12);
        assert!(pose.width_extent < 1e-9);
    }

    #[test]
    fn rotated_ellipse_recovers_the_rotation() {
        let pose = pca_grasp(&rotated_ellipse(0.3, 360)).unwrap();
        assert!((pose.yaw - 0.3).abs() < 1e-6);
        assert!(pose.length_extent > pose.width_extent);
    }

    #[test]
    fn square_lattice_is_isotropic() {
        let mut points = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                points.push((i as f64, j as f64));
            }
        }
        let pose = pca_grasp(&points).unwrap();
        assert!(pose.isotropic);
        assert_eq!(pose.yaw, 0.0);
        assert!((pose.width_extent - pose.length_extent).abs() < 1e-9);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(
            pca_grasp(&[(0.0, 0.0), (1.0, 1.0)]),
            Err(SceneError::TooFewPoints(2))
        ));
        assert!(matches!(
            pca_grasp(&[(0.1, 0.2); 5]),
            Err(SceneError::DegenerateCovariance)
        ));
        assert!(matches!(
            pca_grasp(&[(f64::NAN, 0.0), (1.0, 1.0), (2.0, 2.0)]),
            Err(SceneError::NonFinitePoint)
        ));
    }

    #[test]
    fn translation_moves_center_but_not_yaw() {
        let base = rotated_ellipse(0.7, 180);
        let shifted: Vec<_> = base.iter().map(|(x, y)| (x + 10.0, y - 3.0)).collect();
        let a = pca_grasp(&base).unwrap();
        let b = pca_grasp(&shifted).unwrap();
        assert!((a.yaw - b.yaw).abs() < 1e-9);
        assert!((b.center.0 - (a.center.0 + 10.0)).abs() < 1e-9);
        assert!((b.center.1 - (a.center.1 - 3.0)).abs() < 1e-9);
    }

    #[test]
    fn rotation_equivariance_mod_pi() {
        let base = rotated_ellipse(0.2, 180);
        let phi = 0.9f64;
        let rotated: Vec<_> = base
            .iter()
            .map(|(x, y)| (x * phi.cos() - y * phi.sin(), x * phi.sin() + y * phi.cos()))
            .collect();
        let a = pca_grasp(&base).unwrap();
        let b = pca_grasp(&rotated).unwrap();
        let mut diff = (b.yaw - a.yaw - phi) % PI;
        if diff > PI / 2.0 {
            diff -= PI;
        }
        if diff < -PI / 2.0 {
            diff += PI;
        }
        assert!(diff.abs() < 1e-6);
    }
}
