//! Closed-form distance routines that share no code with GJK.
//!
//! Point-to-primitive distances are analytic. Distances from a link
//! capsule follow from minimising the (convex) point distance along the
//! capsule axis with a golden-section search. Trace verification uses
//! these as its clearance reference.

use nalgebra::Vector3;

use crate::collision::{ConvexShape, ShapeKind};
use crate::robot::{JointVector, RobotModel, DOF};

/// Exact distance from a world point to the shape, 0 inside.
/// Returns `None` for hull shapes, which have no closed form here.
pub fn point_shape_distance(p: &Vector3<f64>, shape: &ConvexShape) -> Option<f64> {
    let local = shape
        .pose
        .orientation
        .inverse_transform_vector(&(p - shape.pose.position));
    let d = match &shape.kind {
        ShapeKind::Sphere { radius } => (local.norm() - radius).max(0.0),
        ShapeKind::Box { half_extents } => {
            let q = local.abs() - half_extents;
            q.map(|v| v.max(0.0)).norm()
        }
        ShapeKind::Cylinder {
            radius,
            half_height,
        } => {
            let radial = (local.x.hypot(local.y) - radius).max(0.0);
            let axial = (local.z.abs() - half_height).max(0.0);
            radial.hypot(axial)
        }
        ShapeKind::Capsule {
            radius,
            half_height,
        } => {
            let z = local.z.clamp(-half_height, *half_height);
            (Vector3::new(local.x, local.y, local.z - z).norm() - radius).max(0.0)
        }
        ShapeKind::Hull { .. } => return None,
    };
    Some(d)
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimum over `t in [0, 1]` of a convex function.
fn minimize_convex(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..90 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    [f(0.0), f(1.0), f1, f2, f(0.5 * (lo + hi))]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Distance from the capsule with axis `a..b` and `radius` to the shape.
pub fn capsule_shape_distance(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    radius: f64,
    shape: &ConvexShape,
) -> Option<f64> {
    point_shape_distance(a, shape)?;
    let axis = b - a;
    let core = minimize_convex(|t| point_shape_distance(&(a + axis * t), shape).unwrap_or(0.0));
    Some((core - radius).max(0.0))
}

/// Per-link clearance against a union of shapes: `(per_link, min, argmin)`.
pub fn arm_clearance_oracle(
    model: &RobotModel,
    q: &JointVector,
    members: &[ConvexShape],
) -> Option<([f64; DOF], f64, usize)> {
    let segs = model.capsule_segments(q);
    let mut per_link = [f64::INFINITY; DOF];
    for (d, (a, b, r)) in per_link.iter_mut().zip(segs.iter()) {
        for m in members {
            *d = d.min(capsule_shape_distance(a, b, *r, m)?);
        }
    }
    let mut arg = 0;
    for i in 1..DOF {
        if per_link[i] < per_link[arg] {
            arg = i;
        }
    }
    Some((per_link, per_link[arg], arg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::Pose;

    #[test]
    fn box_point_distances() {
        let b = ConvexShape::cuboid(Vector3::new(1.0, 1.0, 1.0), Pose::identity()).unwrap();
        let d = |x, y, z| point_shape_distance(&Vector3::new(x, y, z), &b).unwrap();
        assert_eq!(d(0.0, 0.0, 0.0), 0.0);
        assert_eq!(d(3.0, 0.0, 0.0), 2.0);
        assert!((d(2.0, 2.0, 0.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn capsule_against_sphere() {
        let s = ConvexShape::sphere(Vector3::new(0.0, 1.0, 0.0), 0.2).unwrap();
        let d = capsule_shape_distance(
            &Vector3::new(-1.0, 0.0, 0.0),
            &Vector3::new(1.0, 0.0, 0.0),
            0.1,
            &s,
        )
        .unwrap();
        assert!((d - 0.7).abs() < 1e-12);
    }

    #[test]
    fn hull_is_unsupported() {
        let h = ConvexShape::new(
            ShapeKind::from_dims(
                "hull",
                &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            )
            .unwrap(),
            Pose::identity(),
        )
        .unwrap();
        assert!(point_shape_distance(&Vector3::zeros(), &h).is_none());
    }
}
