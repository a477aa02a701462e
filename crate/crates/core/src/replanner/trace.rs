//! JSONL run trace: a header line, one line per tick, a summary line.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{EventKind, PlanState, Status};
use crate::robot::DOF;
use crate::scenario::ObstacleState;

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace has no header line")]
    MissingHeader,
    #[error("unsupported trace format {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyRecord {
    pub clearance_threshold: f64,
    pub check_period: u64,
    pub relabel_radius: f64,
    pub max_joint_step: f64,
    pub goal_tolerance: f64,
    pub lookahead: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub model_hash: String,
    pub roadmap_hash: String,
    pub robot_hash: String,
    pub scenario_id: String,
    /// Hash of the unseeded scenario text.
    pub scenario_hash: String,
    pub seed: u64,
    pub max_ticks: u64,
    pub safety: SafetyRecord,
    pub start: [f64; DOF],
    pub goal: [f64; DOF],
    pub initial_path: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub id: String,
    pub kind: String,
    pub dims: Vec<f64>,
    pub position: [f64; 3],
    pub quat: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub joints: [f64; DOF],
    pub ee_pos: [f64; 3],
    pub ee_quat: [f64; 4],
    /// Member closest to the arm.
    pub obstacle_id: Option<String>,
    pub obstacle_pose: Vec<MemberRecord>,
    pub min_clearance: Option<f64>,
    pub argmin_link: Option<usize>,
    pub status: String,
    /// Index of the waypoint being approached after this tick.
    pub waypoint: usize,
    /// The pose is a waypoint reached on this tick.
    pub arrival: bool,
    pub event: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub status: String,
    pub reason: Option<String>,
    pub ticks: usize,
    pub reroutes: usize,
    pub halts: usize,
    pub min_clearance: Option<f64>,
    pub final_ee_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum TraceLine {
    Header(TraceHeader),
    Tick(TickRecord),
    Summary(TraceSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub ticks: Vec<TickRecord>,
    pub summary: Option<TraceSummary>,
}

pub(super) fn members(o: &ObstacleState) -> Vec<MemberRecord> {
    o.members
        .iter()
        .map(|m| {
            let p = m.shape.pose.position;
            let q = m.shape.pose.orientation.quaternion();
            MemberRecord {
                id: m.id.clone(),
                kind: m.shape.kind.name().into(),
                dims: m.shape.kind.dims(),
                position: [p.x, p.y, p.z],
                quat: [q.w, q.i, q.j, q.k],
            }
        })
        .collect()
}

pub(super) fn event_json(e: &EventKind) -> Value {
    match e {
        EventKind::Planned { path } => json!({"type": "planned", "path": path}),
        EventKind::Reroute { scope, path, masked } => {
            json!({"type": "reroute", "scope": scope.name(), "path": path, "masked": masked})
        }
        EventKind::Halt => json!({"type": "halt"}),
        EventKind::Reached => json!({"type": "reached"}),
        EventKind::Failed(r) => json!({"type": "failed", "reason": r.name()}),
    }
}

/// Event type name of a tick record, if any.
pub fn event_type(t: &TickRecord) -> Option<&str> {
    t.event.as_ref()?.get("type")?.as_str()
}

impl Trace {
    pub fn new(header: TraceHeader) -> Self {
        Trace {
            header,
            ticks: Vec::new(),
            summary: None,
        }
    }

    pub(super) fn push_tick(&mut self, t: TickRecord) {
        self.ticks.push(t);
    }

    pub(super) fn ticks_mut(&mut self) -> &mut Vec<TickRecord> {
        &mut self.ticks
    }

    pub(super) fn finish(&mut self, p: &PlanState, final_ee_error: f64) {
        let min_clearance = self
            .ticks
            .iter()
            .filter_map(|t| t.min_clearance)
            .reduce(f64::min);
        self.summary = Some(TraceSummary {
            status: p.status.name().into(),
            reason: match p.status {
                Status::Failed(r) => Some(r.name().into()),
                _ => None,
            },
            ticks: self.ticks.len(),
            reroutes: self.count_events("reroute"),
            halts: self.count_events("halt"),
            min_clearance,
            final_ee_error,
        });
    }

    pub fn count_events(&self, kind: &str) -> usize {
        self.ticks.iter().filter(|t| event_type(t) == Some(kind)).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |l: TraceLine| {
            out.push_str(&serde_json::to_string(&l).expect("trace records serialise"));
            out.push('\n');
        };
        push(TraceLine::Header(self.header.clone()));
        for t in &self.ticks {
            push(TraceLine::Tick(t.clone()));
        }
        if let Some(s) = &self.summary {
            push(TraceLine::Summary(s.clone()));
        }
        out
    }

    pub fn parse_jsonl(text: &str) -> Result<Trace, TraceError> {
        let mut header = None;
        let mut ticks = Vec::new();
        let mut summary = None;
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: TraceLine = serde_json::from_str(raw).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let misplaced = |what: &str| TraceError::Parse {
                line: i + 1,
                message: format!("unexpected {what} record"),
            };
            match line {
                TraceLine::Header(h) => {
                    if header.is_some() || !ticks.is_empty() {
                        return Err(misplaced("header"));
                    }
                    if h.format != TRACE_FORMAT_VERSION {
                        return Err(TraceError::Version(h.format));
                    }
                    header = Some(h);
                }
                TraceLine::Tick(t) => {
                    if header.is_none() || summary.is_some() {
                        return Err(misplaced("tick"));
                    }
                    ticks.push(t);
                }
                TraceLine::Summary(s) => {
                    if header.is_none() || summary.is_some() {
                        return Err(misplaced("summary"));
                    }
                    summary = Some(s);
                }
            }
        }
        Ok(Trace {
            header: header.ok_or(TraceError::MissingHeader)?,
            ticks,
            summary,
        })
    }
}
