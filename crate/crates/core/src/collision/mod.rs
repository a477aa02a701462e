//! Convex primitives, GJK distance, whole-arm clearance and the
//! reciprocal clearance cost.

mod gjk;
mod shape;

use nalgebra::Vector3;
use thiserror::Error;

pub use gjk::{core_distance, gjk_distance, gjk_distance_with, GjkSettings};
pub use shape::{ConvexShape, SegmentCapsule, ShapeKind, Support};

use crate::robot::{JointVector, RobotError, RobotModel, DOF};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("unknown shape kind `{0}`")]
    UnknownKind(String),
    #[error("GJK did not converge after {iterations} iterations (distance bound {distance_bound})")]
    NonConvergence {
        iterations: usize,
        simplex: Vec<Vector3<f64>>,
        distance_bound: f64,
    },
    #[error(transparent)]
    Robot(#[from] RobotError),
}

/// Per-link distances between the arm and one obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearanceReport {
    pub min_distance: f64,
    pub argmin_link: usize,
    pub per_link: [f64; DOF],
}

impl ClearanceReport {
    pub fn from_per_link(per_link: [f64; DOF]) -> Self {
        let mut argmin_link = 0;
        for (i, &d) in per_link.iter().enumerate() {
            if d < per_link[argmin_link] {
                argmin_link = i;
            }
        }
        ClearanceReport {
            min_distance: per_link[argmin_link],
            argmin_link,
            per_link,
        }
    }

    /// Element-wise minimum of two reports (union of obstacles).
    pub fn merge(&self, other: &ClearanceReport) -> ClearanceReport {
        let mut per_link = self.per_link;
        for (d, o) in per_link.iter_mut().zip(other.per_link.iter()) {
            *d = d.min(*o);
        }
        ClearanceReport::from_per_link(per_link)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub beta: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { beta: 2.0 }
    }
}

impl CostParams {
    pub fn new(beta: f64) -> Result<Self, CollisionError> {
        if beta.is_finite() && beta > 0.0 {
            Ok(CostParams { beta })
        } else {
            Err(CollisionError::InvalidShape(format!(
                "cost exponent must be positive, got {beta}"
            )))
        }
    }
}

/// World-frame link capsules for configuration `q` (no limit check).
pub fn link_capsules(model: &RobotModel, q: &JointVector) -> [SegmentCapsule; DOF] {
    let segs = model.capsule_segments(q);
    segs.map(|(a, b, radius)| SegmentCapsule { a, b, radius })
}

/// GJK distance from every link capsule to `obstacle`.
pub fn arm_clearance(
    model: &RobotModel,
    q: &JointVector,
    obstacle: &ConvexShape,
) -> Result<ClearanceReport, CollisionError> {
    model.check_limits(q)?;
    capsules_clearance(&link_capsules(model, q), obstacle)
}

pub fn capsules_clearance(
    capsules: &[SegmentCapsule; DOF],
    obstacle: &ConvexShape,
) -> Result<ClearanceReport, CollisionError> {
    let mut per_link = [0.0; DOF];
    for (d, cap) in per_link.iter_mut().zip(capsules.iter()) {
        *d = gjk_distance(cap, obstacle)?;
    }
    Ok(ClearanceReport::from_per_link(per_link))
}

/// True when every capsule keeps a distance strictly above `floor` from
/// the obstacle. Skips GJK for pairs whose bounding spheres already
/// guarantee it.
pub fn capsules_clear_of(
    capsules: &[SegmentCapsule; DOF],
    obstacle: &ConvexShape,
    floor: f64,
) -> Result<bool, CollisionError> {
    let center = obstacle.pose.position;
    let bound = obstacle.bounding_radius();
    for cap in capsules {
        let lower = point_segment_distance(&center, &cap.a, &cap.b) - cap.radius - bound;
        if lower > floor {
            continue;
        }
        if gjk_distance(cap, obstacle)? <= floor {
            return Ok(false);
        }
    }
    Ok(true)
}

pub(crate) fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + ab * t - p).norm()
}

/// Reciprocal clearance cost `1 / d^beta`; infinite on contact.
pub fn clearance_cost(report: &ClearanceReport, params: &CostParams) -> f64 {
    if report.min_distance <= 0.0 {
        f64::INFINITY
    } else {
        report.min_distance.powf(-params.beta)
    }
}

/// Collision flag: minimum clearance at or below `margin`.
pub fn is_collision(
    model: &RobotModel,
    q: &JointVector,
    obstacle: &ConvexShape,
    margin: f64,
) -> Result<bool, CollisionError> {
    Ok(arm_clearance(model, q, obstacle)?.min_distance <= margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::Pose;
    use proptest::prelude::*;

    #[test]
    fn cost_arithmetic() {
        let p = CostParams::default();
        let r = |d: f64| ClearanceReport::from_per_link([d; DOF]);
        assert_eq!(clearance_cost(&r(1.0), &p), 1.0);
        assert_eq!(clearance_cost(&r(0.5), &p), 4.0);
        assert_eq!(clearance_cost(&r(0.0), &p), f64::INFINITY);
    }

    #[test]
    fn rejects_non_positive_beta() {
        assert!(CostParams::new(0.0).is_err());
        assert!(CostParams::new(-1.0).is_err());
    }

    #[test]
    fn far_obstacle() {
        let m = RobotModel::panda();
        let q = m.midpoint();
        let o = ConvexShape::sphere(Vector3::new(10.0, 0.0, 0.5), 0.02).unwrap();
        let r = arm_clearance(&m, &q, &o).unwrap();
        assert!(r.min_distance > 9.0);
        assert!(!is_collision(&m, &q, &o, 0.05).unwrap());
    }

    #[test]
    fn obstacle_on_link_axis() {
        let m = RobotModel::panda();
        let q = m.midpoint();
        let caps = link_capsules(&m, &q);
        let mid = 0.5 * (caps[3].a + caps[3].b);
        let o = ConvexShape::sphere(mid, 0.01).unwrap();
        let r = arm_clearance(&m, &q, &o).unwrap();
        assert_eq!(r.min_distance, 0.0);
        assert_eq!(r.argmin_link, 3);
        assert!(is_collision(&m, &q, &o, 0.0).unwrap());
    }

    #[test]
    fn report_argmin_and_merge() {
        let a = ClearanceReport::from_per_link([0.5, 0.2, 0.3, 0.2, 1.0, 1.0, 1.0]);
        assert_eq!(a.argmin_link, 1);
        assert_eq!(a.min_distance, 0.2);
        let b = ClearanceReport::from_per_link([0.1, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9]);
        let m = a.merge(&b);
        assert_eq!(m.argmin_link, 0);
        assert_eq!(m.min_distance, 0.1);
    }

    #[test]
    fn clear_of_agrees_with_exact() {
        let m = RobotModel::panda();
        for seed in 0..50u64 {
            let q = m.random_configuration(seed);
            let caps = link_capsules(&m, &q);
            let o = ConvexShape::cuboid(
                Vector3::new(0.05, 0.08, 0.1),
                Pose::from_position(Vector3::new(0.4, 0.1 * (seed % 5) as f64, 0.5)),
            )
            .unwrap();
            let exact = capsules_clearance(&caps, &o).unwrap().min_distance;
            for floor in [0.0, 0.05, 0.08, 0.3] {
                assert_eq!(capsules_clear_of(&caps, &o, floor).unwrap(), exact > floor);
            }
        }
    }

    proptest! {
        #[test]
        fn cost_strictly_decreasing(a in 1e-3f64..10.0, b in 1e-3f64..10.0, beta in 0.1f64..4.0) {
            prop_assume!(a < b);
            let p = CostParams::new(beta).unwrap();
            let ra = ClearanceReport::from_per_link([a; DOF]);
            let rb = ClearanceReport::from_per_link([b; DOF]);
            prop_assert!(clearance_cost(&ra, &p) > clearance_cost(&rb, &p));
        }
    }
}
