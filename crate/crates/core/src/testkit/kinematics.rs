//! Matrix-composition forward kinematics, written without the isometry
//! types used by the library.

use crate::robot::{DhConvention, JointVector, Pose, RobotModel};

pub type Mat4 = [[f64; 4]; 4];

pub fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

pub fn identity() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// Craig's link transform written out element by element.
pub fn modified_dh(a: f64, d: f64, alpha: f64, theta: f64) -> Mat4 {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    [
        [ct, -st, 0.0, a],
        [st * ca, ct * ca, -sa, -sa * d],
        [st * sa, ct * sa, ca, ca * d],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

pub fn standard_dh(a: f64, d: f64, alpha: f64, theta: f64) -> Mat4 {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    [
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

pub fn oracle_chain(model: &RobotModel, q: &JointVector) -> Vec<Mat4> {
    let mut acc = identity();
    let mut out = Vec::new();
    for (row, &qi) in model.dh.iter().zip(q.0.iter()) {
        let t = match model.convention {
            DhConvention::Modified => modified_dh(row.a, row.d, row.alpha, qi + row.theta_offset),
            DhConvention::Standard => standard_dh(row.a, row.d, row.alpha, qi + row.theta_offset),
        };
        acc = mul(&acc, &t);
        out.push(acc);
    }
    out
}

pub fn pose_matrix(p: &Pose) -> Mat4 {
    let r = p.orientation.to_rotation_matrix();
    let mut m = identity();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[(i, j)];
        }
        m[i][3] = p.position[i];
    }
    m
}

/// Quaternion (w, x, y, z) with w >= 0 from a rotation matrix.
pub fn matrix_quat(m: &Mat4) -> [f64; 4] {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        [0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        [(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s]
    } else if m[1][1] > m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s]
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s]
    };
    if q[0] < 0.0 {
        q.map(|v| -v)
    } else {
        q
    }
}

pub fn quat_close(a: [f64; 4], b: [f64; 4], tol: f64) -> bool {
    let same = a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol);
    let flipped = a.iter().zip(b.iter()).all(|(x, y)| (x + y).abs() <= tol);
    same || flipped
}

