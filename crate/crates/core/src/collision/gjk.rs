//! Gilbert-Johnson-Keerthi minimum distance between convex sets.
//!
//! Operates on the "cores" of both shapes (sphere and capsule radii are
//! handled as margins), then subtracts the margins and clamps at zero.

use nalgebra::{Matrix3, Vector3};

use super::shape::Support;
use super::CollisionError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GjkSettings {
    /// Relative gap `(|v|^2 - v.w) / |v|^2` below which the search stops.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GjkSettings {
    fn default() -> Self {
        GjkSettings {
            tolerance: 1e-9,
            max_iterations: 64,
        }
    }
}

/// Distance between the shapes' cores (no margins applied).
pub fn core_distance<A: Support + ?Sized, B: Support + ?Sized>(
    a: &A,
    b: &B,
    settings: &GjkSettings,
) -> Result<f64, CollisionError> {
    let minkowski = |d: &Vector3<f64>| a.support(d) - b.support(&-d);

    let mut dir = b.center() - a.center();
    if dir.norm_squared() == 0.0 {
        dir = Vector3::x();
    }
    let mut simplex: Vec<Vector3<f64>> = vec![minkowski(&dir)];
    let mut v = simplex[0];
    let mut best = v.norm_squared();

    for _ in 0..settings.max_iterations {
        let vv = v.norm_squared();
        if vv <= 1e-24 {
            return Ok(0.0);
        }
        let w = minkowski(&-v);
        if vv - v.dot(&w) <= settings.tolerance * vv {
            return Ok(vv.sqrt());
        }
        if simplex.iter().any(|p| (p - w).norm_squared() <= 1e-24 * vv.max(1.0)) {
            return Ok(vv.sqrt());
        }
        simplex.push(w);
        let (closest, kept) = closest_on_simplex(&simplex);
        simplex = kept;
        let nv = closest.norm_squared();
        if simplex.len() == 4 || nv <= 1e-24 {
            return Ok(0.0);
        }
        if nv >= best {
            // no further descent possible in floating point
            return Ok(best.min(vv).sqrt());
        }
        best = nv;
        v = closest;
    }
    Err(CollisionError::NonConvergence {
        iterations: settings.max_iterations,
        simplex,
        distance_bound: best.sqrt(),
    })
}

/// Euclidean distance between two convex shapes; 0 when they touch or overlap.
pub fn gjk_distance<A: Support + ?Sized, B: Support + ?Sized>(
    a: &A,
    b: &B,
) -> Result<f64, CollisionError> {
    gjk_distance_with(a, b, &GjkSettings::default())
}

pub fn gjk_distance_with<A: Support + ?Sized, B: Support + ?Sized>(
    a: &A,
    b: &B,
    settings: &GjkSettings,
) -> Result<f64, CollisionError> {
    let core = core_distance(a, b, settings)?;
    Ok((core - a.margin() - b.margin()).max(0.0))
}

/// Closest point of conv(points) to the origin, along with the minimal
/// vertex subset whose relative interior contains it.
fn closest_on_simplex(points: &[Vector3<f64>]) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let n = points.len();
    let mut best: Option<(f64, usize, Vector3<f64>, u32)> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let sub: Vec<Vector3<f64>> = idx.iter().map(|&i| points[i]).collect();
        if let Some(p) = project_origin(&sub) {
            let d = p.norm_squared();
            let size = sub.len();
            let better = match &best {
                None => true,
                Some((bd, bs, _, _)) => d < *bd || (d == *bd && size < *bs),
            };
            if better {
                best = Some((d, size, p, mask));
            }
        }
    }
    let (_, _, p, mask) = best.expect("single vertices are always valid");
    let kept = (0..n)
        .filter(|i| mask & (1 << i) != 0)
        .map(|i| points[i])
        .collect();
    (p, kept)
}

/// Projection of the origin onto the affine hull of `pts`, if it lies in
/// the relative interior and the hull is non-degenerate.
fn project_origin(pts: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    let p0 = pts[0];
    match pts.len() {
        1 => Some(p0),
        2 => {
            let e = pts[1] - p0;
            let ee = e.norm_squared();
            if ee <= 1e-30 {
                return None;
            }
            let t = -p0.dot(&e) / ee;
            (t > 0.0 && t < 1.0).then(|| p0 + e * t)
        }
        3 => {
            let e1 = pts[1] - p0;
            let e2 = pts[2] - p0;
            let (a, b, c) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
            let det = a * c - b * b;
            if det <= 1e-14 * a * c || det <= 0.0 {
                return None;
            }
            let (r1, r2) = (-p0.dot(&e1), -p0.dot(&e2));
            let m1 = (r1 * c - r2 * b) / det;
            let m2 = (a * r2 - b * r1) / det;
            (m1 > 0.0 && m2 > 0.0 && m1 + m2 < 1.0).then(|| p0 + e1 * m1 + e2 * m2)
        }
        4 => {
            let e = Matrix3::from_columns(&[pts[1] - p0, pts[2] - p0, pts[3] - p0]);
            let scale = (0..3).map(|i| e.column(i).norm()).product::<f64>();
            let det = e.determinant();
            if det.abs() <= 1e-12 * scale || scale == 0.0 {
                return None;
            }
            // origin = p0 + E m  (full-dimensional: projection is the origin)
            let m = e.try_inverse()? * (-p0);
            (m.iter().all(|&x| x > 0.0) && m.sum() < 1.0).then(Vector3::zeros)
        }
        _ => None,
    }
}
