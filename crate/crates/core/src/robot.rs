//! Kinematic and geometric model of a 7-DoF serial arm.
//!
//! Frames follow Denavit-Hartenberg rows; every link carries one capsule
//! expressed in its own frame. The default model is the Franka Emika Panda
//! (modified DH), with the flange offset folded into the last row.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::util::content_hash;

/// Number of actuated joints.
pub const DOF: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobotError {
    #[error("joint {joint} value {value} outside limit [{lower}, {upper}]")]
    JointLimit {
        joint: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("robot file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Seven joint angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointVector(pub [f64; DOF]);

impl JointVector {
    pub fn zeros() -> Self {
        JointVector([0.0; DOF])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Largest absolute per-joint difference.
    pub fn max_abs_diff(&self, other: &JointVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn lerp(&self, other: &JointVector, t: f64) -> JointVector {
        let mut out = [0.0; DOF];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0[i] + (other.0[i] - self.0[i]) * t;
        }
        JointVector(out)
    }
}

impl From<[f64; DOF]> for JointVector {
    fn from(v: [f64; DOF]) -> Self {
        JointVector(v)
    }
}

/// Rigid pose: position in meters plus unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn from_position(position: Vector3<f64>) -> Self {
        Pose {
            position,
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Pose {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Quaternion as `[w, x, y, z]`, sign fixed so that `w >= 0`.
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * p + self.position
    }
}

/// Convention used to turn a DH row into a rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DhConvention {
    /// Craig: `RotX(alpha) * TransX(a) * RotZ(theta) * TransZ(d)`.
    Modified,
    /// Classic: `RotZ(theta) * TransZ(d) * TransX(a) * RotX(alpha)`.
    Standard,
}

impl DhConvention {
    fn name(self) -> &'static str {
        match self {
            DhConvention::Modified => "modified",
            DhConvention::Standard => "standard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhRow {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    pub theta_offset: f64,
}

impl DhRow {
    pub const fn new(a: f64, d: f64, alpha: f64, theta_offset: f64) -> Self {
        DhRow {
            a,
            d,
            alpha,
            theta_offset,
        }
    }

    pub fn transform(&self, convention: DhConvention, q: f64) -> Isometry3<f64> {
        let theta = q + self.theta_offset;
        let rot_x = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        let rot_z = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta);
        match convention {
            DhConvention::Modified => {
                // origin: (a, -d sin(alpha), d cos(alpha))
                let rotation = rot_x * rot_z;
                let t = Vector3::new(self.a, 0.0, 0.0) + rot_x * Vector3::new(0.0, 0.0, self.d);
                Isometry3::from_parts(Translation3::from(t), rotation)
            }
            DhConvention::Standard => {
                let rotation = rot_z * rot_x;
                let t = Vector3::new(0.0, 0.0, self.d) + rot_z * Vector3::new(self.a, 0.0, 0.0);
                Isometry3::from_parts(Translation3::from(t), rotation)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimit {
    pub const fn new(lower: f64, upper: f64) -> Self {
        JointLimit { lower, upper }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Capsule attached to one link, endpoints given in the link frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCapsule {
    pub radius: f64,
    pub start: Vector3<f64>,
    pub end: Vector3<f64>,
}

impl LinkCapsule {
    pub fn new(radius: f64, start: [f64; 3], end: [f64; 3]) -> Self {
        LinkCapsule {
            radius,
            start: Vector3::from(start),
            end: Vector3::from(end),
        }
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }
}

/// Immutable arm description.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub convention: DhConvention,
    pub dh: [DhRow; DOF],
    pub limits: [JointLimit; DOF],
    pub capsules: [LinkCapsule; DOF],
}

const PANDA_RADIUS: f64 = 0.06;

impl RobotModel {
    pub fn new(
        name: impl Into<String>,
        convention: DhConvention,
        dh: [DhRow; DOF],
        limits: [JointLimit; DOF],
        capsules: [LinkCapsule; DOF],
    ) -> Result<Self, RobotError> {
        let model = RobotModel {
            name: name.into(),
            convention,
            dh,
            limits,
            capsules,
        };
        model.validate()?;
        Ok(model)
    }

    /// Franka Emika Panda, modified DH, flange frame as end effector.
    pub fn panda() -> Self {
        use std::f64::consts::FRAC_PI_2;
        let dh = [
            DhRow::new(0.0, 0.333, 0.0, 0.0),
            DhRow::new(0.0, 0.0, -FRAC_PI_2, 0.0),
            DhRow::new(0.0, 0.316, FRAC_PI_2, 0.0),
            DhRow::new(0.0825, 0.0, FRAC_PI_2, 0.0),
            DhRow::new(-0.0825, 0.384, -FRAC_PI_2, 0.0),
            DhRow::new(0.0, 0.0, FRAC_PI_2, 0.0),
            // flange offset (0.107) folded into the last row
            DhRow::new(0.088, 0.107, FRAC_PI_2, 0.0),
        ];
        let limits = [
            JointLimit::new(-2.8973, 2.8973),
            JointLimit::new(-1.7628, 1.7628),
            JointLimit::new(-2.8973, 2.8973),
            JointLimit::new(-3.0718, -0.0698),
            JointLimit::new(-2.8973, 2.8973),
            JointLimit::new(-0.0175, 3.7525),
            JointLimit::new(-2.8973, 2.8973),
        ];
        let r = PANDA_RADIUS;
        let capsules = [
            LinkCapsule::new(r, [0.0, 0.0, -0.18], [0.0, 0.0, 0.0]),
            LinkCapsule::new(r, [0.0, 0.0, 0.0], [0.0, -0.316, 0.0]),
            LinkCapsule::new(r, [0.0, 0.0, 0.0], [0.0825, 0.0, 0.0]),
            LinkCapsule::new(r, [0.0, 0.0, 0.0], [-0.0825, 0.384, 0.0]),
            LinkCapsule::new(r, [0.0, 0.0, -0.25], [0.0, 0.0, 0.0]),
            LinkCapsule::new(r, [0.0, 0.0, 0.0], [0.088, -0.107, 0.0]),
            LinkCapsule::new(r, [0.0, 0.0, -0.05], [0.0, 0.0, 0.1]),
        ];
        RobotModel::new("panda", DhConvention::Modified, dh, limits, capsules)
            .expect("builtin panda model is valid")
    }

    fn validate(&self) -> Result<(), RobotError> {
        for (i, l) in self.limits.iter().enumerate() {
            if !(l.lower.is_finite() && l.upper.is_finite() && l.lower < l.upper) {
                return Err(RobotError::InvalidModel(format!(
                    "joint {i} limit [{}, {}] is empty",
                    l.lower, l.upper
                )));
            }
        }
        for (i, row) in self.dh.iter().enumerate() {
            if ![row.a, row.d, row.alpha, row.theta_offset]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(RobotError::InvalidModel(format!("dh row {i} not finite")));
            }
        }
        for (i, c) in self.capsules.iter().enumerate() {
            if !(c.radius > 0.0 && c.length() > 0.0) {
                return Err(RobotError::InvalidModel(format!(
                    "capsule of link {i} must have positive radius and length"
                )));
            }
        }
        Ok(())
    }

    pub fn check_limits(&self, q: &JointVector) -> Result<(), RobotError> {
        for (joint, (&value, lim)) in q.0.iter().zip(self.limits.iter()).enumerate() {
            if !lim.contains(value) {
                return Err(RobotError::JointLimit {
                    joint,
                    value,
                    lower: lim.lower,
                    upper: lim.upper,
                });
            }
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        self.check_limits(q).is_ok()
    }

    /// Clamps every joint into its interval; returns the number of joints moved.
    pub fn clamp(&self, q: &JointVector) -> (JointVector, usize) {
        let mut out = *q;
        let mut moved = 0;
        for (v, lim) in out.0.iter_mut().zip(self.limits.iter()) {
            let c = lim.clamp(*v);
            if c != *v {
                moved += 1;
            }
            *v = c;
        }
        (out, moved)
    }

    pub fn midpoint(&self) -> JointVector {
        let mut q = [0.0; DOF];
        for (v, lim) in q.iter_mut().zip(self.limits.iter()) {
            *v = lim.midpoint();
        }
        JointVector(q)
    }

    /// End-effector (flange) pose.
    pub fn forward_kinematics(&self, q: &JointVector) -> Result<Pose, RobotError> {
        self.check_limits(q)?;
        Ok(self.forward_kinematics_unchecked(q))
    }

    pub fn forward_kinematics_unchecked(&self, q: &JointVector) -> Pose {
        let mut acc = Isometry3::identity();
        for (row, &qi) in self.dh.iter().zip(q.0.iter()) {
            acc *= row.transform(self.convention, qi);
        }
        Pose::from_isometry(&acc)
    }

    /// Cumulative frame after each joint; the last entry is the flange.
    pub fn link_poses(&self, q: &JointVector) -> Result<[Pose; DOF], RobotError> {
        self.check_limits(q)?;
        Ok(self.link_poses_unchecked(q))
    }

    pub fn link_poses_unchecked(&self, q: &JointVector) -> [Pose; DOF] {
        let mut out = [Pose::identity(); DOF];
        let mut acc = Isometry3::identity();
        for (i, (row, &qi)) in self.dh.iter().zip(q.0.iter()).enumerate() {
            acc *= row.transform(self.convention, qi);
            out[i] = Pose::from_isometry(&acc);
        }
        out
    }

    /// Capsule axis endpoints in the world frame, with radii.
    pub fn capsule_segments(&self, q: &JointVector) -> [(Vector3<f64>, Vector3<f64>, f64); DOF] {
        let poses = self.link_poses_unchecked(q);
        let mut out = [(Vector3::zeros(), Vector3::zeros(), 0.0); DOF];
        for (i, (pose, cap)) in poses.iter().zip(self.capsules.iter()).enumerate() {
            out[i] = (
                pose.transform_point(&cap.start),
                pose.transform_point(&cap.end),
                cap.radius,
            );
        }
        out
    }

    /// Uniform sample inside the joint limits, reproducible from `seed`.
    pub fn random_configuration(&self, seed: u64) -> JointVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_configuration(&mut rng)
    }

    pub fn sample_configuration<R: Rng + ?Sized>(&self, rng: &mut R) -> JointVector {
        let mut q = [0.0; DOF];
        for (v, lim) in q.iter_mut().zip(self.limits.iter()) {
            *v = rng.random_range(lim.lower..=lim.upper);
        }
        JointVector(q)
    }

    /// Canonical text form (see `docs/formats.md`).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# latentroute robot description v1");
        let _ = writeln!(s, "name {}", self.name);
        let _ = writeln!(s, "convention {}", self.convention.name());
        for r in &self.dh {
            let _ = writeln!(s, "dh {} {} {} {}", r.a, r.d, r.alpha, r.theta_offset);
        }
        for l in &self.limits {
            let _ = writeln!(s, "limit {} {}", l.lower, l.upper);
        }
        for c in &self.capsules {
            let _ = writeln!(
                s,
                "capsule {} {} {} {} {} {} {}",
                c.radius, c.start.x, c.start.y, c.start.z, c.end.x, c.end.y, c.end.z
            );
        }
        s
    }

    /// Hash of the canonical text form.
    pub fn content_hash(&self) -> String {
        content_hash(self.to_text().as_bytes())
    }
}

fn parse_floats(line: usize, tokens: &[&str], expected: usize) -> Result<Vec<f64>, RobotError> {
    if tokens.len() != expected {
        return Err(RobotError::Parse {
            line,
            message: format!("expected {expected} numbers, found {}", tokens.len()),
        });
    }
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>().map_err(|_| RobotError::Parse {
                line,
                message: format!("invalid number `{t}`"),
            })
        })
        .collect()
}

impl FromStr for RobotModel {
    type Err = RobotError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut name = String::from("robot");
        let mut convention = DhConvention::Modified;
        let mut dh = Vec::new();
        let mut limits = Vec::new();
        let mut capsules = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            match tokens[0] {
                "name" => {
                    name = tokens[1..].join(" ");
                }
                "convention" => {
                    convention = match tokens.get(1).copied() {
                        Some("modified") => DhConvention::Modified,
                        Some("standard") => DhConvention::Standard,
                        other => {
                            return Err(RobotError::Parse {
                                line,
                                message: format!("unknown convention {other:?}"),
                            })
                        }
                    }
                }
                "dh" => {
                    let v = parse_floats(line, &tokens[1..], 4)?;
                    dh.push(DhRow::new(v[0], v[1], v[2], v[3]));
                }
                "limit" => {
                    let v = parse_floats(line, &tokens[1..], 2)?;
                    limits.push(JointLimit::new(v[0], v[1]));
                }
                "capsule" => {
                    let v = parse_floats(line, &tokens[1..], 7)?;
                    capsules.push(LinkCapsule::new(v[0], [v[1], v[2], v[3]], [v[4], v[5], v[6]]));
                }
                other => {
                    return Err(RobotError::Parse {
                        line,
                        message: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        let count_err = |what: &str, n: usize| {
            RobotError::InvalidModel(format!("expected {DOF} {what} entries, found {n}"))
        };
        let dh: [DhRow; DOF] = dh.try_into().map_err(|v: Vec<_>| count_err("dh", v.len()))?;
        let limits: [JointLimit; DOF] = limits
            .try_into()
            .map_err(|v: Vec<_>| count_err("limit", v.len()))?;
        let capsules: [LinkCapsule; DOF] = capsules
            .try_into()
            .map_err(|v: Vec<_>| count_err("capsule", v.len()))?;
        RobotModel::new(name, convention, dh, limits, capsules)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dh_chain_is_identity() {
        let mut m = RobotModel::panda();
        m.dh = [DhRow::new(0.0, 0.0, 0.0, 0.0); DOF];
        let q = m.random_configuration(3);
        let poses = m.link_poses(&q).unwrap();
        let ee = m.forward_kinematics(&q).unwrap();
        assert!(ee.position.norm() < 1e-15);
        for p in &poses {
            assert!(p.position.norm() < 1e-15);
        }
        // joint rotations about a shared z axis simply add up
        let total: f64 = q.0.iter().sum();
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), total);
        assert!(ee.orientation.angle_to(&expected) < 1e-12);
    }

    #[test]
    fn zero_dh_zero_angles_identity_orientation() {
        let mut m = RobotModel::panda();
        m.dh = [DhRow::new(0.0, 0.0, 0.0, 0.0); DOF];
        m.limits = [JointLimit::new(-1.0, 1.0); DOF];
        let poses = m.link_poses(&JointVector::zeros()).unwrap();
        for p in &poses {
            assert_eq!(p.quat_wxyz(), [1.0, 0.0, 0.0, 0.0]);
            assert_eq!(p.position, Vector3::zeros());
        }
    }

    #[test]
    fn limit_violation_names_joint() {
        let m = RobotModel::panda();
        let mut q = m.midpoint();
        q.0[3] = 0.5;
        match m.forward_kinematics(&q) {
            Err(RobotError::JointLimit { joint, .. }) => assert_eq!(joint, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn last_link_pose_equals_fk() {
        let m = RobotModel::panda();
        for seed in 0..20 {
            let q = m.random_configuration(seed);
            let poses = m.link_poses(&q).unwrap();
            assert_eq!(poses[DOF - 1], m.forward_kinematics(&q).unwrap());
        }
    }

    #[test]
    fn same_seed_same_configuration() {
        let m = RobotModel::panda();
        assert_eq!(m.random_configuration(42), m.random_configuration(42));
        assert_ne!(m.random_configuration(42), m.random_configuration(43));
    }

    #[test]
    fn text_round_trip() {
        let m = RobotModel::panda();
        let parsed: RobotModel = m.to_text().parse().unwrap();
        assert_eq!(parsed, m);
        assert_eq!(parsed.content_hash(), m.content_hash());
    }

    #[test]
    fn rejects_empty_limit_and_bad_counts() {
        let text = RobotModel::panda().to_text().replace("limit -1.7628 1.7628", "limit 1 1");
        assert!(matches!(
            text.parse::<RobotModel>(),
            Err(RobotError::InvalidModel(_))
        ));
        let short: String = RobotModel::panda()
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("capsule"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(short.parse::<RobotModel>().is_err());
        assert!(matches!(
            "bogus 1 2".parse::<RobotModel>(),
            Err(RobotError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn clamp_counts_moved_joints() {
        let m = RobotModel::panda();
        let mut q = m.midpoint();
        q.0[0] = 10.0;
        q.0[5] = -10.0;
        let (c, moved) = m.clamp(&q);
        assert_eq!(moved, 2);
        assert!(m.within_limits(&c));
    }
}
