use nalgebra::{UnitQuaternion, Vector3};

use super::CollisionError;
use crate::robot::Pose;

/// Geometry of a convex primitive in its local frame.
///
/// Boxes are given by half extents; cylinders and capsules are aligned
/// with the local z axis and given by radius and half height.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeKind {
    Sphere { radius: f64 },
    Box { half_extents: Vector3<f64> },
    Cylinder { radius: f64, half_height: f64 },
    Capsule { radius: f64, half_height: f64 },
    Hull { points: Vec<Vector3<f64>> },
}

impl ShapeKind {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Sphere { .. } => "sphere",
            ShapeKind::Box { .. } => "box",
            ShapeKind::Cylinder { .. } => "cylinder",
            ShapeKind::Capsule { .. } => "capsule",
            ShapeKind::Hull { .. } => "hull",
        }
    }

    /// Flat parameter list, in file order.
    pub fn dims(&self) -> Vec<f64> {
        match self {
            ShapeKind::Sphere { radius } => vec![*radius],
            ShapeKind::Box { half_extents } => half_extents.iter().copied().collect(),
            ShapeKind::Cylinder {
                radius,
                half_height,
            }
            | ShapeKind::Capsule {
                radius,
                half_height,
            } => vec![*radius, *half_height],
            ShapeKind::Hull { points } => points.iter().flat_map(|p| p.iter().copied()).collect(),
        }
    }

    pub fn from_dims(kind: &str, dims: &[f64]) -> Result<ShapeKind, CollisionError> {
        let want = |n: usize| {
            if dims.len() == n {
                Ok(())
            } else {
                Err(CollisionError::InvalidShape(format!(
                    "{kind} expects {n} dimensions, got {}",
                    dims.len()
                )))
            }
        };
        let shape = match kind {
            "sphere" => {
                want(1)?;
                ShapeKind::Sphere { radius: dims[0] }
            }
            "box" => {
                want(3)?;
                ShapeKind::Box {
                    half_extents: Vector3::new(dims[0], dims[1], dims[2]),
                }
            }
            "cylinder" => {
                want(2)?;
                ShapeKind::Cylinder {
                    radius: dims[0],
                    half_height: dims[1],
                }
            }
            "capsule" => {
                want(2)?;
                ShapeKind::Capsule {
                    radius: dims[0],
                    half_height: dims[1],
                }
            }
            "hull" => {
                if dims.len() % 3 != 0 {
                    return Err(CollisionError::InvalidShape(
                        "hull dimensions must be xyz triples".into(),
                    ));
                }
                ShapeKind::Hull {
                    points: dims
                        .chunks(3)
                        .map(|c| Vector3::new(c[0], c[1], c[2]))
                        .collect(),
                }
            }
            other => return Err(CollisionError::UnknownKind(other.to_string())),
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<(), CollisionError> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CollisionError::InvalidShape(format!(
                    "{} {what} must be positive, got {v}",
                    self.name()
                )))
            }
        };
        match self {
            ShapeKind::Sphere { radius } => positive(*radius, "radius"),
            ShapeKind::Box { half_extents } => {
                for h in half_extents.iter() {
                    positive(*h, "half extent")?;
                }
                Ok(())
            }
            ShapeKind::Cylinder {
                radius,
                half_height,
            }
            | ShapeKind::Capsule {
                radius,
                half_height,
            } => {
                positive(*radius, "radius")?;
                positive(*half_height, "half height")
            }
            ShapeKind::Hull { points } => {
                if points.len() < 4 || points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
                    return Err(CollisionError::InvalidShape(
                        "hull needs at least 4 finite points".into(),
                    ));
                }
                if !has_volume(points) {
                    return Err(CollisionError::InvalidShape("hull points are coplanar".into()));
                }
                Ok(())
            }
        }
    }

    /// Radius of a sphere about the local origin enclosing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            ShapeKind::Sphere { radius } => *radius,
            ShapeKind::Box { half_extents } => half_extents.norm(),
            ShapeKind::Cylinder {
                radius,
                half_height,
            } => radius.hypot(*half_height),
            ShapeKind::Capsule {
                radius,
                half_height,
            } => radius + half_height,
            ShapeKind::Hull { points } => points.iter().map(|p| p.norm()).fold(0.0, f64::max),
        }
    }
}

fn has_volume(points: &[Vector3<f64>]) -> bool {
    let p0 = points[0];
    let scale = points
        .iter()
        .map(|p| (p - p0).norm())
        .fold(0.0, f64::max)
        .max(1e-300);
    for i in 1..points.len() {
        for j in i + 1..points.len() {
            let n = (points[i] - p0).cross(&(points[j] - p0));
            if n.norm() <= 1e-12 * scale * scale {
                continue;
            }
            if points
                .iter()
                .any(|p| n.dot(&(p - p0)).abs() > 1e-9 * scale * scale * scale)
            {
                return true;
            }
        }
    }
    false
}

/// Anything usable by GJK: a support mapping over a "core" set plus a
/// spherical margin swept around it.
pub trait Support {
    fn support(&self, dir: &Vector3<f64>) -> Vector3<f64>;
    fn margin(&self) -> f64;
    /// A point inside the core, used to seed the search.
    fn center(&self) -> Vector3<f64>;
}

/// A convex primitive placed in the world.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexShape {
    pub kind: ShapeKind,
    pub pose: Pose,
}

impl ConvexShape {
    pub fn new(kind: ShapeKind, pose: Pose) -> Result<Self, CollisionError> {
        kind.validate()?;
        Ok(ConvexShape { kind, pose })
    }

    pub fn sphere(center: Vector3<f64>, radius: f64) -> Result<Self, CollisionError> {
        ConvexShape::new(ShapeKind::Sphere { radius }, Pose::from_position(center))
    }

    pub fn cuboid(half_extents: Vector3<f64>, pose: Pose) -> Result<Self, CollisionError> {
        ConvexShape::new(ShapeKind::Box { half_extents }, pose)
    }

    pub fn cylinder(radius: f64, half_height: f64, pose: Pose) -> Result<Self, CollisionError> {
        ConvexShape::new(
            ShapeKind::Cylinder {
                radius,
                half_height,
            },
            pose,
        )
    }

    /// Capsule whose axis runs from `a` to `b`.
    pub fn capsule_between(
        a: Vector3<f64>,
        b: Vector3<f64>,
        radius: f64,
    ) -> Result<Self, CollisionError> {
        let axis = b - a;
        let len = axis.norm();
        let orientation = UnitQuaternion::rotation_between(&Vector3::z(), &axis)
            .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
        ConvexShape::new(
            ShapeKind::Capsule {
                radius,
                half_height: 0.5 * len,
            },
            Pose {
                position: 0.5 * (a + b),
                orientation,
            },
        )
    }

    pub fn bounding_radius(&self) -> f64 {
        self.kind.bounding_radius()
    }
}

impl Support for ConvexShape {
    fn support(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        let local = self.pose.orientation.inverse_transform_vector(dir);
        let sgn = |v: f64, h: f64| if v >= 0.0 { h } else { -h };
        let p = match &self.kind {
            ShapeKind::Sphere { .. } => Vector3::zeros(),
            ShapeKind::Capsule { half_height, .. } => {
                Vector3::new(0.0, 0.0, sgn(local.z, *half_height))
            }
            ShapeKind::Box { half_extents } => Vector3::new(
                sgn(local.x, half_extents.x),
                sgn(local.y, half_extents.y),
                sgn(local.z, half_extents.z),
            ),
            ShapeKind::Cylinder {
                radius,
                half_height,
            } => {
                let r = local.x.hypot(local.y);
                let z = sgn(local.z, *half_height);
                if r > 0.0 {
                    Vector3::new(radius * local.x / r, radius * local.y / r, z)
                } else {
                    Vector3::new(0.0, 0.0, z)
                }
            }
            ShapeKind::Hull { points } => {
                let mut best = points[0];
                let mut best_dot = best.dot(&local);
                for p in &points[1..] {
                    let d = p.dot(&local);
                    if d > best_dot {
                        best = *p;
                        best_dot = d;
                    }
                }
                best
            }
        };
        self.pose.transform_point(&p)
    }

    fn margin(&self) -> f64 {
        match &self.kind {
            ShapeKind::Sphere { radius } | ShapeKind::Capsule { radius, .. } => *radius,
            _ => 0.0,
        }
    }

    fn center(&self) -> Vector3<f64> {
        match &self.kind {
            ShapeKind::Hull { points } => {
                let c = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / points.len() as f64;
                self.pose.transform_point(&c)
            }
            _ => self.pose.position,
        }
    }
}

/// Capsule given directly by world-frame axis endpoints; used for arm links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentCapsule {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

impl Support for SegmentCapsule {
    fn support(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        if self.b.dot(dir) > self.a.dot(dir) {
            self.b
        } else {
            self.a
        }
    }

    fn margin(&self) -> f64 {
        self.radius
    }

    fn center(&self) -> Vector3<f64> {
        0.5 * (self.a + self.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive_dimensions() {
        assert!(ShapeKind::from_dims("sphere", &[0.0]).is_err());
        assert!(ShapeKind::from_dims("box", &[0.1, -0.1, 0.1]).is_err());
        assert!(ShapeKind::from_dims("cylinder", &[0.1, f64::NAN]).is_err());
        assert!(ShapeKind::from_dims("box", &[0.1, 0.1]).is_err());
    }

    #[test]
    fn unknown_kind_is_named() {
        match ShapeKind::from_dims("torus", &[1.0]) {
            Err(CollisionError::UnknownKind(k)) => assert_eq!(k, "torus"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hull_needs_volume() {
        let flat = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        assert!(ShapeKind::from_dims("hull", &flat).is_err());
        let tet = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert!(ShapeKind::from_dims("hull", &tet).is_ok());
        assert!(ShapeKind::from_dims("hull", &tet[..9]).is_err());
    }

    #[test]
    fn box_support_picks_corner() {
        let b = ConvexShape::cuboid(Vector3::new(1.0, 2.0, 3.0), Pose::identity()).unwrap();
        assert_eq!(
            b.support(&Vector3::new(1.0, -1.0, 1.0)),
            Vector3::new(1.0, -2.0, 3.0)
        );
    }

    #[test]
    fn capsule_between_spans_endpoints() {
        let a = Vector3::new(0.1, 0.2, 0.3);
        let b = Vector3::new(-0.4, 0.5, 0.9);
        let c = ConvexShape::capsule_between(a, b, 0.05).unwrap();
        let d = (b - a).normalize();
        assert!((c.support(&d) - b).norm() < 1e-12);
        assert!((c.support(&-d) - a).norm() < 1e-12);
    }
}
