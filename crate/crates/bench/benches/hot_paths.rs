use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use latentroute::collision::{gjk_distance, ConvexShape};
use latentroute::dataset::{Normalization, FIELDS};
use latentroute::roadmap::graph::{adjacency_from_edges, dijkstra};
use latentroute::vae::{VaeModel, DEFAULT_HIDDEN};
use latentroute::{arm_clearance, Pose, RobotModel};
use latentroute_bench::{configurations, lattice};
use nalgebra::{UnitQuaternion, Vector3};
use ndarray::Array2;

fn forward_kinematics(c: &mut Criterion) {
    let robot = RobotModel::panda();
    let qs = configurations(&robot, 256, 1);
    c.bench_function("fk/256 configs", |b| {
        b.iter(|| {
            for q in &qs {
                black_box(robot.forward_kinematics(black_box(q)).unwrap());
            }
        })
    });
    let sphere = ConvexShape::sphere(Vector3::new(0.5, 0.1, 0.3), 0.05).unwrap();
    c.bench_function("clearance/arm vs sphere", |b| {
        b.iter(|| black_box(arm_clearance(&robot, black_box(&qs[0]), &sphere).unwrap()))
    });
}

fn gjk(c: &mut Criterion) {
    let pose = |x: f64, r: f64| Pose {
        position: Vector3::new(x, 0.1, -0.05),
        orientation: UnitQuaternion::from_euler_angles(r, 0.3, -0.2),
    };
    let cube = ConvexShape::cuboid(Vector3::new(0.1, 0.2, 0.15), pose(0.0, 0.4)).unwrap();
    let cyl = ConvexShape::cylinder(0.12, 0.2, pose(0.45, -0.7)).unwrap();
    let overlapping = ConvexShape::cylinder(0.12, 0.2, pose(0.1, -0.7)).unwrap();
    c.bench_function("gjk/box-cylinder separated", |b| {
        b.iter(|| black_box(gjk_distance(black_box(&cube), black_box(&cyl)).unwrap()))
    });
    c.bench_function("gjk/box-cylinder overlapping", |b| {
        b.iter(|| black_box(gjk_distance(black_box(&cube), black_box(&overlapping)).unwrap()))
    });
}

fn routing(c: &mut Criterion) {
    let side = 100;
    let adj = adjacency_from_edges(side * side, &lattice(side));
    c.bench_function("dijkstra/100x100 lattice corner to corner", |b| {
        b.iter(|| black_box(dijkstra(&adj, 0, side * side - 1, &|_| true)))
    });
}

fn vae_forward(c: &mut Criterion) {
    let model = VaeModel::new(&DEFAULT_HIDDEN, 1e-3, Normalization::identity(), 3);
    let x = Array2::from_shape_fn((256, FIELDS), |(i, j)| ((i * FIELDS + j) as f64 * 0.37).sin());
    c.bench_function("vae/encode+decode 256 rows", |b| {
        b.iter(|| {
            let (mu, _) = model.encode_batch(black_box(x.view())).unwrap();
            black_box(model.decode_batch(mu.view()).unwrap())
        })
    });
}

criterion_group!(benches, forward_kinematics, gjk, routing, vae_forward);
criterion_main!(benches);
