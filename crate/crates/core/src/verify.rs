//! Independent replay of a run trace.
//!
//! Kinematics are recomputed from the robot model, obstacle poses from the
//! scenario timeline, and clearances with the closed-form routines in
//! [`crate::oracle`] rather than GJK.

use std::fmt;

use crate::oracle::arm_clearance_oracle;
use crate::replanner::{event_type, MemberRecord, Trace};
use crate::robot::{JointVector, RobotModel};
use crate::scenario::{ObstacleState, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub kinematics: f64,
    pub clearance: f64,
    pub pose: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            kinematics: 1e-9,
            clearance: 1e-6,
            pose: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    /// `None` for header or summary problems.
    pub tick: Option<u64>,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tick {
            Some(t) => write!(f, "tick {t}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub ticks: usize,
    pub arrivals: usize,
    pub mismatches: Vec<Mismatch>,
    /// Smallest recomputed clearance over all ticks with an obstacle.
    pub min_clearance: Option<f64>,
    /// Smallest recomputed clearance over waypoint arrivals.
    pub min_arrival_clearance: Option<f64>,
    /// Largest gap between logged and recomputed clearance.
    pub max_clearance_error: f64,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn member_matches(rec: &MemberRecord, o: &ObstacleState, i: usize, tol: f64) -> Result<(), String> {
    let Some(m) = o.members.get(i) else {
        return Err(format!("unexpected member {}", rec.id));
    };
    let p = m.shape.pose.position;
    let q = m.shape.pose.orientation.quaternion();
    let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol);
    if rec.id != m.id || rec.kind != m.shape.kind.name() {
        return Err(format!("member {i} is {} {}, expected {} {}", rec.id, rec.kind, m.id, m.shape.kind.name()));
    }
    if !close(&rec.dims, &m.shape.kind.dims()) {
        return Err(format!("member {} dims {:?} differ from {:?}", m.id, rec.dims, m.shape.kind.dims()));
    }
    if !close(&rec.position, &[p.x, p.y, p.z]) || !close(&rec.quat, &[q.w, q.i, q.j, q.k]) {
        return Err(format!("member {} pose differs from the timeline", m.id));
    }
    Ok(())
}

fn quat_close(a: &[f64; 4], b: &[f64; 4], tol: f64) -> bool {
    let same = a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol);
    let flipped = a.iter().zip(b).all(|(x, y)| (x + y).abs() <= tol);
    same || flipped
}

/// Replays `trace` against `scenario` (unseeded, as loaded) and `robot`.
pub fn verify_trace(trace: &Trace, scenario: &Scenario, robot: &RobotModel, tol: &Tolerances) -> VerifyReport {
    let mut r = VerifyReport {
        ticks: trace.ticks.len(),
        ..Default::default()
    };
    let mut bad = |tick: Option<u64>, field: &'static str, message: String| {
        r.mismatches.push(Mismatch { tick, field, message });
    };
    let h = &trace.header;
    if h.robot_hash != robot.content_hash() {
        bad(None, "robot_hash", "robot model differs from the one the trace was recorded with".into());
    }
    if h.scenario_hash != scenario.content_hash() || h.scenario_id != scenario.id {
        bad(None, "scenario_hash", format!("trace was recorded for scenario {}", h.scenario_id));
    }
    if h.start != scenario.start.0 || h.goal != scenario.goal.0 {
        bad(None, "start", "start or goal differs from the scenario".into());
    }
    if trace.ticks.len() as u64 > h.max_ticks {
        bad(None, "ticks", format!("{} ticks exceed the cap {}", trace.ticks.len(), h.max_ticks));
    }
    let seeded = scenario.with_seed(h.seed);
    let safety = &h.safety;
    let mut prev: Option<JointVector> = None;
    let mut min_all: Option<f64> = None;
    let mut min_arr: Option<f64> = None;
    let mut max_err = 0.0f64;
    let mut arrivals = 0;

    for (i, t) in trace.ticks.iter().enumerate() {
        let tick = Some(t.tick);
        if t.tick != i as u64 {
            bad(tick, "tick", format!("expected tick {i}"));
        }
        let q = JointVector(t.joints);
        if i == 0 && t.joints != h.start {
            bad(tick, "joints", "first pose is not the start".into());
        }
        if let Err(e) = robot.check_limits(&q) {
            bad(tick, "joints", e.to_string());
            prev = Some(q);
            continue;
        }
        if let Some(p) = prev {
            let step = q.max_abs_diff(&p);
            if step > safety.max_joint_step * (1.0 + 1e-9) {
                bad(tick, "joints", format!("step {step:.6} rad exceeds {}", safety.max_joint_step));
            }
        }
        prev = Some(q);

        let ee = robot.forward_kinematics_unchecked(&q);
        let pos_err = (0..3)
            .map(|k| (ee.position[k] - t.ee_pos[k]).abs())
            .fold(0.0, f64::max);
        if pos_err > tol.kinematics || !quat_close(&ee.quat_wxyz(), &t.ee_quat, tol.kinematics) {
            bad(tick, "ee_pose", format!("end-effector pose off by {pos_err:.3e}"));
        }

        let obstacle = match seeded.obstacle_at(t.tick) {
            Ok(o) => o,
            Err(e) => {
                bad(tick, "obstacle_pose", e.to_string());
                continue;
            }
        };
        let n_members = obstacle.as_ref().map_or(0, |o| o.members.len());
        if t.obstacle_pose.len() != n_members {
            bad(tick, "obstacle_pose", format!("{} members logged, {n_members} present", t.obstacle_pose.len()));
        } else if let Some(o) = &obstacle {
            for (k, m) in t.obstacle_pose.iter().enumerate() {
                if let Err(msg) = member_matches(m, o, k, tol.pose) {
                    bad(tick, "obstacle_pose", msg);
                }
            }
        }

        let Some(o) = obstacle else {
            if t.min_clearance.is_some() {
                bad(tick, "min_clearance", "logged with no obstacle present".into());
            }
            continue;
        };
        let Some((_, c, _)) = arm_clearance_oracle(robot, &q, &o.shapes()) else {
            bad(tick, "min_clearance", "obstacle has no closed-form distance (hull)".into());
            continue;
        };
        min_all = Some(min_all.map_or(c, |m| m.min(c)));
        match t.min_clearance {
            Some(logged) => {
                let err = (logged - c).abs();
                max_err = max_err.max(err);
                if err > tol.clearance {
                    bad(tick, "min_clearance", format!("logged {logged:.9}, recomputed {c:.9}"));
                }
            }
            None => bad(tick, "min_clearance", "missing".into()),
        }
        if c <= 0.0 {
            bad(tick, "contact", "arm touches the obstacle".into());
        }
        if t.arrival {
            arrivals += 1;
            min_arr = Some(min_arr.map_or(c, |m| m.min(c)));
            if c <= safety.clearance_threshold {
                bad(tick, "arrival", format!("waypoint clearance {c:.6} not above {}", safety.clearance_threshold));
            }
        }
    }

    match &trace.summary {
        None => bad(None, "summary", "missing".into()),
        Some(s) => {
            if s.ticks != trace.ticks.len() {
                bad(None, "summary", format!("{} ticks claimed, {} recorded", s.ticks, trace.ticks.len()));
            }
            if let Some(last) = trace.ticks.last() {
                if last.status != s.status {
                    bad(None, "summary", format!("status {} but last tick says {}", s.status, last.status));
                }
            }
            if s.reroutes != trace.count_events("reroute") || s.halts != trace.count_events("halt") {
                bad(None, "summary", "event counts differ from the tick records".into());
            }
            let logged_min = trace.ticks.iter().filter_map(|t| t.min_clearance).reduce(f64::min);
            if logged_min != s.min_clearance {
                bad(None, "summary", "minimum clearance differs from the tick records".into());
            }
            if let Some(last) = trace.ticks.last() {
                let ee = robot.forward_kinematics_unchecked(&JointVector(last.joints));
                let goal = robot.forward_kinematics_unchecked(&JointVector(h.goal));
                let err = (ee.position - goal.position).norm();
                if (err - s.final_ee_error).abs() > tol.kinematics {
                    bad(None, "summary", format!("final error {} recomputes as {err}", s.final_ee_error));
                }
                if s.status == "reached" && err > safety.goal_tolerance {
                    bad(None, "summary", format!("reached with end-effector error {err:.4} m"));
                }
            }
            let failed = trace.ticks.iter().filter(|t| event_type(t) == Some("failed")).count();
            if (s.status == "failed") != (failed == 1) {
                bad(None, "summary", "failure status and failure events disagree".into());
            }
        }
    }
    r.arrivals = arrivals;
    r.min_clearance = min_all;
    r.min_arrival_clearance = min_arr;
    r.max_clearance_error = max_err;
    r
}
