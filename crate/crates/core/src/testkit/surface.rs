//! Brute-force distance by dense surface sampling.
//!
//! Each shape is covered by about `n` points (faces on a grid, edges and
//! rims densely in 1D, corners exactly). The distance estimate is the
//! smallest analytic point-to-shape distance from either sample set.

use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;

use crate::collision::{ConvexShape, ShapeKind};
use crate::oracle::point_shape_distance;
use crate::robot::Pose;

fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            Vector3::new(r * th.cos(), y, r * th.sin())
        })
        .collect()
}

fn grid(f: impl Fn(f64, f64) -> Vector3<f64>, nu: usize, nv: usize) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let u = if nu == 1 { 0.5 } else { i as f64 / (nu - 1) as f64 };
            let v = if nv == 1 { 0.5 } else { j as f64 / (nv - 1) as f64 };
            out.push(f(u, v));
        }
    }
    out
}

/// Local-frame surface samples, roughly `n` of them.
pub fn local_surface_points(kind: &ShapeKind, n: usize) -> Vec<Vector3<f64>> {
    match kind {
        ShapeKind::Sphere { radius } => fibonacci_sphere(n).into_iter().map(|p| p * *radius).collect(),
        ShapeKind::Box { half_extents: h } => {
            let edge_budget = n / 4;
            let per_edge = edge_budget / 12;
            let mut pts = Vec::with_capacity(n);
            for sx in [-1.0, 1.0] {
                for sy in [-1.0, 1.0] {
                    for sz in [-1.0, 1.0] {
                        pts.push(Vector3::new(sx * h.x, sy * h.y, sz * h.z));
                    }
                }
            }
            for axis in 0..3 {
                let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                for sa in [-1.0, 1.0] {
                    for sb in [-1.0, 1.0] {
                        for k in 0..per_edge {
                            let t = -1.0 + 2.0 * k as f64 / (per_edge - 1) as f64;
                            let mut p = Vector3::zeros();
                            p[axis] = t * h[axis];
                            p[a] = sa * h[a];
                            p[b] = sb * h[b];
                            pts.push(p);
                        }
                    }
                }
            }
            let area: f64 = 2.0 * (h.x * h.y + h.y * h.z + h.x * h.z);
            let face_budget = (n - pts.len()) as f64;
            for axis in 0..3 {
                let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                let face_area = h[a] * h[b];
                let count = face_budget * face_area / area;
                let aspect = h[a] / h[b];
                let na = ((count * aspect).sqrt().ceil() as usize).max(2);
                let nb = ((count / aspect).sqrt().ceil() as usize).max(2);
                for s in [-1.0, 1.0] {
                    pts.extend(grid(
                        |u, v| {
                            let mut p = Vector3::zeros();
                            p[axis] = s * h[axis];
                            p[a] = (2.0 * u - 1.0) * h[a];
                            p[b] = (2.0 * v - 1.0) * h[b];
                            p
                        },
                        na,
                        nb,
                    ));
                }
            }
            pts
        }
        ShapeKind::Cylinder {
            radius: r,
            half_height: hh,
        } => {
            let rim = n / 8;
            let mut pts = Vec::with_capacity(n);
            for s in [-1.0, 1.0] {
                for k in 0..rim {
                    let th = 2.0 * PI * k as f64 / rim as f64;
                    pts.push(Vector3::new(r * th.cos(), r * th.sin(), s * hh));
                }
            }
            let side_area = 2.0 * PI * r * 2.0 * hh;
            let cap_area = 2.0 * PI * r * r;
            let rest = (n - pts.len()) as f64;
            let side = rest * side_area / (side_area + cap_area);
            let n_th = ((side * PI * r / (2.0 * hh)).sqrt().ceil() as usize).max(8);
            let n_z = ((side / n_th as f64).ceil() as usize).max(2);
            pts.extend(grid(
                |u, v| {
                    let th = 2.0 * PI * u;
                    Vector3::new(r * th.cos(), r * th.sin(), (2.0 * v - 1.0) * hh)
                },
                n_th,
                n_z,
            ));
            let cap = (rest - side) / 2.0;
            let rings = ((cap / PI).sqrt().ceil() as usize).max(2);
            for s in [-1.0, 1.0] {
                pts.push(Vector3::new(0.0, 0.0, s * hh));
                for i in 1..=rings {
                    let rr = r * i as f64 / rings as f64;
                    let m = (2.0 * PI * i as f64).ceil() as usize;
                    for k in 0..m {
                        let th = 2.0 * PI * k as f64 / m as f64;
                        pts.push(Vector3::new(rr * th.cos(), rr * th.sin(), s * hh));
                    }
                }
            }
            pts
        }
        ShapeKind::Capsule {
            radius: r,
            half_height: hh,
        } => {
            let sphere_area = 4.0 * PI * r * r;
            let side_area = 2.0 * PI * r * 2.0 * hh;
            let ns = (n as f64 * sphere_area / (sphere_area + side_area)) as usize;
            let mut pts: Vec<Vector3<f64>> = fibonacci_sphere(ns.max(16))
                .into_iter()
                .map(|p| {
                    let s = if p.z >= 0.0 { 1.0 } else { -1.0 };
                    p * *r + Vector3::new(0.0, 0.0, s * hh)
                })
                .collect();
            let side = n.saturating_sub(pts.len()) as f64;
            let n_th = ((side * PI * r / (2.0 * hh)).sqrt().ceil() as usize).max(8);
            let n_z = ((side / n_th as f64).ceil() as usize).max(2);
            pts.extend(grid(
                |u, v| {
                    let th = 2.0 * PI * u;
                    Vector3::new(r * th.cos(), r * th.sin(), (2.0 * v - 1.0) * hh)
                },
                n_th,
                n_z,
            ));
            pts
        }
        ShapeKind::Hull { points } => points.clone(),
    }
}

pub fn surface_points(shape: &ConvexShape, n: usize) -> Vec<Vector3<f64>> {
    local_surface_points(&shape.kind, n)
        .into_iter()
        .map(|p| shape.pose.transform_point(&p))
        .collect()
}

/// Distance estimate from `n` surface samples per shape.
pub fn sampled_distance(a: &ConvexShape, b: &ConvexShape, n: usize) -> f64 {
    let one_way = |from: &ConvexShape, to: &ConvexShape| {
        surface_points(from, n)
            .iter()
            .map(|p| point_shape_distance(p, to).expect("primitive shapes only"))
            .fold(f64::INFINITY, f64::min)
    };
    one_way(a, b).min(one_way(b, a))
}

pub fn random_orientation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    let v = Vector3::new(
        rng.random_range(-PI..PI),
        rng.random_range(-PI..PI),
        rng.random_range(-PI..PI),
    );
    UnitQuaternion::from_scaled_axis(v)
}

/// Random sphere, box, cylinder or capsule with dimensions in
/// `[0.05, 0.3]` m centred inside `[-extent, extent]^3`.
pub fn random_primitive<R: Rng + ?Sized>(rng: &mut R, extent: f64) -> ConvexShape {
    let which = rng.random_range(0..4);
    let mut dim = || rng.random_range(0.05..0.3);
    let kind = match which {
        0 => ShapeKind::Sphere { radius: dim() },
        1 => ShapeKind::Box {
            half_extents: Vector3::new(dim(), dim(), dim()),
        },
        2 => ShapeKind::Cylinder {
            radius: dim(),
            half_height: dim(),
        },
        _ => ShapeKind::Capsule {
            radius: dim(),
            half_height: dim(),
        },
    };
    let pose = Pose {
        position: Vector3::new(
            rng.random_range(-extent..extent),
            rng.random_range(-extent..extent),
            rng.random_range(-extent..extent),
        ),
        orientation: random_orientation(rng),
    };
    ConvexShape::new(kind, pose).expect("positive dimensions")
}
