//! Forward kinematics against a plain 4x4 homogeneous-matrix composition.

use latentroute::robot::{DhConvention, JointVector, RobotModel, DOF};
use latentroute::testkit::kinematics::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn configs(model: &RobotModel, n: usize, seed: u64) -> Vec<JointVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| model.sample_configuration(&mut rng)).collect()
}

#[test]
fn fk_matches_matrix_oracle_on_1000_configurations() {
    let model = RobotModel::panda();
    for q in configs(&model, 1000, 7) {
        let ee = model.forward_kinematics(&q).unwrap();
        let oracle = *oracle_chain(&model, &q).last().unwrap();
        for i in 0..3 {
            assert!((ee.position[i] - oracle[i][3]).abs() <= 1e-9);
        }
        assert!(quat_close(ee.quat_wxyz(), matrix_quat(&oracle), 1e-9));
        let qn: f64 = ee.quat_wxyz().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((qn - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn zero_configuration_matches_oracle() {
    let mut model = RobotModel::panda();
    model.limits = [latentroute::robot::JointLimit::new(-4.0, 4.0); DOF];
    let q = JointVector::zeros();
    let ee = model.forward_kinematics(&q).unwrap();
    let oracle = *oracle_chain(&model, &q).last().unwrap();
    for i in 0..3 {
        assert!((ee.position[i] - oracle[i][3]).abs() <= 1e-12);
    }
    // known Panda flange position at zero angles
    assert!((ee.position.x - 0.088).abs() < 1e-12);
    assert!(ee.position.y.abs() < 1e-12);
    assert!((ee.position.z - (0.333 + 0.316 + 0.384 - 0.107)).abs() < 1e-12);
}

#[test]
fn standard_convention_matches_oracle() {
    let mut model = RobotModel::panda();
    model.convention = DhConvention::Standard;
    for q in configs(&model, 100, 11) {
        let ee = model.forward_kinematics(&q).unwrap();
        let oracle = *oracle_chain(&model, &q).last().unwrap();
        for i in 0..3 {
            assert!((ee.position[i] - oracle[i][3]).abs() <= 1e-9);
        }
        assert!(quat_close(ee.quat_wxyz(), matrix_quat(&oracle), 1e-9));
    }
}

#[test]
fn intermediate_rotations_are_orthonormal() {
    let model = RobotModel::panda();
    for q in configs(&model, 200, 3) {
        for p in model.link_poses(&q).unwrap() {
            let r = p.orientation.to_rotation_matrix().into_inner();
            let err = (r.transpose() * r - nalgebra::Matrix3::identity()).abs().max();
            assert!(err <= 1e-9);
        }
    }
}

#[test]
fn link_poses_step_by_single_transform_and_prefix_consistent() {
    let model = RobotModel::panda();
    for q in configs(&model, 200, 5) {
        let poses = model.link_poses(&q).unwrap();
        let chain = oracle_chain(&model, &q);
        for i in 0..DOF {
            let m = pose_matrix(&poses[i]);
            for r in 0..3 {
                for c in 0..4 {
                    assert!((m[r][c] - chain[i][r][c]).abs() <= 1e-9);
                }
            }
            if i + 1 < DOF {
                let row = model.dh[i + 1];
                let step = modified_dh(row.a, row.d, row.alpha, q.0[i + 1] + row.theta_offset);
                let next = mul(&pose_matrix(&poses[i]), &step);
                let actual = pose_matrix(&poses[i + 1]);
                for r in 0..3 {
                    for c in 0..4 {
                        assert!((next[r][c] - actual[r][c]).abs() <= 1e-9);
                    }
                }
            }
        }
        // truncating the chain to i joints reproduces pose i
        for i in 1..=DOF {
            let mut truncated = model.clone();
            for row in truncated.dh.iter_mut().skip(i) {
                *row = latentroute::robot::DhRow::new(0.0, 0.0, 0.0, 0.0);
            }
            let mut qt = q;
            for v in qt.0.iter_mut().skip(i) {
                *v = 0.0;
            }
            let ee = truncated.forward_kinematics_unchecked(&qt);
            assert!((ee.position - poses[i - 1].position).norm() <= 1e-12);
            assert!(ee.orientation.angle_to(&poses[i - 1].orientation) <= 1e-9);
        }
    }
}

#[test]
fn random_configuration_statistics() {
    let model = RobotModel::panda();
    let n = 10_000;
    let samples: Vec<JointVector> = (0..n as u64).map(|s| model.random_configuration(s)).collect();
    for j in 0..DOF {
        let lim = model.limits[j];
        let vals: Vec<f64> = samples.iter().map(|q| q.0[j]).collect();
        assert!(vals.iter().all(|&v| v >= lim.lower && v <= lim.upper));
        let mean = vals.iter().sum::<f64>() / n as f64;
        // uniform on [l, u]: sd = (u - l) / sqrt(12)
        let se = (lim.upper - lim.lower) / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - lim.midpoint()).abs() < 3.0 * se, "joint {j}");
    }
}
