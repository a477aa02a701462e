//! Closed-loop executive: follow decoded roadmap waypoints, watch the live
//! clearance, and reroute through the roadmap when the way ahead is
//! blocked.
//!
//! Each tick the executive senses the obstacle for that tick, then decides
//! the arm pose for it. Poses along the active path must keep clearance
//! above the threshold; the first segment of an escape route out of a
//! violated pose only has to stay at or above the clearance it starts
//! with.

mod trace;

use std::cell::RefCell;
use std::collections::BTreeSet;

use nalgebra::Vector3;
use thiserror::Error;

use crate::collision::{capsules_clear_of, link_capsules, CollisionError};
use crate::dataset::{Sample, FIELDS};
use crate::roadmap::{Roadmap, RoadmapError};
use crate::robot::{JointVector, RobotModel};
use crate::scenario::{ObstacleState, Scenario};
use crate::vae::{VaeError, VaeModel};

/// Artifact hashes recorded in a trace header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lineage {
    pub tool_version: String,
    pub config_hash: String,
    pub model_hash: String,
    pub roadmap_hash: String,
}

pub use trace::{
    event_type, MemberRecord, SafetyRecord, Trace, TraceError, TraceHeader, TraceLine, TraceSummary, TickRecord,
    TRACE_FORMAT_VERSION,
};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid safety configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Collision(#[from] CollisionError),
    #[error(transparent)]
    Roadmap(#[from] RoadmapError),
    #[error(transparent)]
    Vae(#[from] VaeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyConfig {
    /// Minimum arm-obstacle distance (m) for poses on the active path.
    pub clearance_threshold: f64,
    /// Clearance is checked every `check_period` ticks.
    pub check_period: u64,
    /// Latent radius of the local relabelling; `None` uses 5x the median
    /// roadmap edge.
    pub relabel_radius: Option<f64>,
    /// Per-tick joint motion cap (rad, max-norm).
    pub max_joint_step: f64,
    /// End-effector distance (m) that counts as reaching the goal.
    pub goal_tolerance: f64,
    /// Number of upcoming poses re-verified on every check.
    pub lookahead: usize,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            clearance_threshold: 0.08,
            check_period: 1,
            relabel_radius: None,
            max_joint_step: 0.05,
            goal_tolerance: 0.03,
            lookahead: 10,
        }
    }
}

impl SafetyConfig {
    /// `collision_margin` is the margin the dataset labels were made with.
    pub fn validate(&self, collision_margin: f64) -> Result<(), PlanError> {
        let bad = |m: String| Err(PlanError::Config(m));
        if !(self.clearance_threshold > collision_margin && self.clearance_threshold.is_finite()) {
            return bad(format!(
                "clearance threshold {} must exceed the collision margin {collision_margin}",
                self.clearance_threshold
            ));
        }
        if self.check_period == 0 {
            return bad("check period must be at least 1".into());
        }
        if self.relabel_radius.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            return bad("relabel radius must be positive".into());
        }
        if !(self.max_joint_step > 0.0 && self.max_joint_step.is_finite()) {
            return bad("joint step must be positive".into());
        }
        if !(self.goal_tolerance > 0.0) {
            return bad("goal tolerance must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailReason {
    Unreachable,
    Trapped,
    Timeout,
}

impl FailReason {
    pub fn name(self) -> &'static str {
        match self {
            FailReason::Unreachable => "unreachable",
            FailReason::Trapped => "trapped",
            FailReason::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Following,
    Replanning,
    Reached,
    Failed(FailReason),
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Following => "following",
            Status::Replanning => "replanning",
            Status::Reached => "reached",
            Status::Failed(_) => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Reached | Status::Failed(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Local,
    Global,
}

impl Scope {
    pub fn name(self) -> &'static str {
        match self {
            Scope::Local => "local",
            Scope::Global => "global",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Planned { path: Vec<usize> },
    Reroute {
        scope: Scope,
        path: Vec<usize>,
        /// Nodes found violating the threshold during this search.
        masked: usize,
    },
    /// The next pose failed its check and no move was possible.
    Halt,
    Reached,
    Failed(FailReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub tick: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanState {
    pub tick: u64,
    pub joints: JointVector,
    pub goal: JointVector,
    /// Active node sequence.
    pub path: Vec<usize>,
    /// Decoded joints of `path`, followed by the goal joints.
    pub waypoints: Vec<JointVector>,
    /// Index of the waypoint being approached.
    pub progress: usize,
    /// Set while escaping from a pose below the threshold: poses before the
    /// first waypoint only need clearance above this value.
    pub escape_floor: Option<f64>,
    pub status: Status,
    pub events: Vec<Event>,
}

impl PlanState {
    pub fn reroutes(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Reroute { .. }))
            .count()
    }

    fn fail(&mut self, reason: FailReason) {
        self.status = Status::Failed(reason);
        self.events.push(Event {
            tick: self.tick,
            kind: EventKind::Failed(reason),
        });
    }
}

/// Whether the tick ended on a waypoint, and what happened.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub arrival: bool,
    pub event: Option<EventKind>,
}

/// One step of straight-line joint motion toward `target`.
pub fn advance(q: &JointVector, target: &JointVector, max_step: f64) -> JointVector {
    let d = q.max_abs_diff(target);
    // the slack absorbs rounding left over from earlier partial steps
    if d <= max_step * (1.0 + 1e-9) {
        *target
    } else {
        q.lerp(target, max_step / d)
    }
}

/// Poses visited when moving from `from` to `to`, excluding `from`.
pub fn segment_poses(from: &JointVector, to: &JointVector, max_step: f64) -> Vec<JointVector> {
    let mut out = Vec::new();
    let mut q = *from;
    while q != *to {
        q = advance(&q, to, max_step);
        out.push(q);
    }
    out
}

struct Replan {
    scope: Scope,
    path: Vec<usize>,
    waypoints: Vec<JointVector>,
    masked: usize,
    escape: Option<f64>,
}

struct Search<'s> {
    /// Node verdicts against the current obstacle (None = not checked).
    node_ok: RefCell<Vec<Option<bool>>>,
    blocked_edges: RefCell<BTreeSet<(usize, usize)>>,
    checked_region: Vec<bool>,
    scope: Scope,
    masked: usize,
    obstacle: Option<&'s ObstacleState>,
}

/// Planning context shared by every tick of a run.
pub struct Planner<'a> {
    pub robot: &'a RobotModel,
    pub roadmap: &'a Roadmap,
    /// Without a model, states are snapped by joint-space distance.
    pub model: Option<&'a VaeModel>,
    pub cfg: SafetyConfig,
    radius: f64,
}

const ENTRY_CANDIDATES: usize = 48;
const MAX_REPAIRS: usize = 400;

impl<'a> Planner<'a> {
    pub fn new(
        robot: &'a RobotModel,
        roadmap: &'a Roadmap,
        model: Option<&'a VaeModel>,
        cfg: SafetyConfig,
    ) -> Result<Self, PlanError> {
        cfg.validate(0.0)?;
        if roadmap.is_empty() {
            return Err(PlanError::Config("roadmap is empty".into()));
        }
        let radius = cfg
            .relabel_radius
            .unwrap_or_else(|| 5.0 * roadmap.median_edge_length());
        Ok(Planner {
            robot,
            roadmap,
            model,
            cfg,
            radius,
        })
    }

    pub fn relabel_radius(&self) -> f64 {
        self.radius
    }

    /// Strictly above `floor` against every member (trivially true without
    /// an obstacle).
    fn pose_clear(
        &self,
        q: &JointVector,
        obstacle: Option<&ObstacleState>,
        floor: f64,
    ) -> Result<bool, PlanError> {
        let Some(o) = obstacle else { return Ok(true) };
        let caps = link_capsules(self.robot, q);
        for m in &o.members {
            if !capsules_clear_of(&caps, &m.shape, floor)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn segment_clear(
        &self,
        from: &JointVector,
        to: &JointVector,
        obstacle: Option<&ObstacleState>,
        floor: f64,
    ) -> Result<bool, PlanError> {
        for q in segment_poses(from, to, self.cfg.max_joint_step) {
            if !self.pose_clear(&q, obstacle, floor)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn min_clearance(&self, q: &JointVector, obstacle: Option<&ObstacleState>) -> Result<f64, PlanError> {
        Ok(match obstacle {
            None => f64::INFINITY,
            Some(o) => o
                .clearance(self.robot, q)?
                .map_or(f64::INFINITY, |c| c.report.min_distance),
        })
    }

    /// Latent code of `q` with the obstacle anchor and flag 0; missing
    /// obstacle fields are set to the normalisation mean.
    fn encode(&self, q: &JointVector, obstacle: Option<&ObstacleState>) -> Result<Option<[f64; 2]>, PlanError> {
        let Some(m) = self.model else { return Ok(None) };
        let ee = self.robot.forward_kinematics(q).map_err(CollisionError::from)?;
        let mean = m.normalization.mean;
        let obstacle_pos = obstacle
            .and_then(|o| o.anchor())
            .unwrap_or_else(|| Vector3::new(mean[14], mean[15], mean[16]));
        let row = Sample {
            joints: *q,
            ee_pose: ee,
            obstacle_pos,
            collision: false,
        }
        .to_row();
        let x: [f64; FIELDS] = m.normalization.normalize(&row);
        Ok(Some(m.encode(&x)?.0))
    }

    /// Node indices ordered by closeness to `q` (latent when a model is
    /// present, joint space otherwise).
    fn candidates(
        &self,
        q: &JointVector,
        obstacle: Option<&ObstacleState>,
        limit: usize,
    ) -> Result<Vec<usize>, PlanError> {
        let r = self.roadmap;
        let mut scored: Vec<(f64, usize)> = match self.encode(q, obstacle)? {
            Some(z) => r
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| ((n.coords[0] - z[0]).powi(2) + (n.coords[1] - z[1]).powi(2), i))
                .collect(),
            None => r
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| (n.decoded_joints.max_abs_diff(q), i))
                .collect(),
        };
        let limit = limit.min(scored.len());
        if limit < scored.len() {
            scored.select_nth_unstable_by(limit, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            scored.truncate(limit);
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().map(|s| s.1).collect())
    }

    fn node_ok(&self, s: &Search, i: usize) -> Result<bool, PlanError> {
        if let Some(v) = s.node_ok.borrow()[i] {
            return Ok(v);
        }
        let ok = self.pose_clear(
            &self.roadmap.nodes[i].decoded_joints,
            s.obstacle,
            self.cfg.clearance_threshold,
        )?;
        s.node_ok.borrow_mut()[i] = Some(ok);
        Ok(ok)
    }

    fn new_search<'s>(
        &self,
        scope: Scope,
        centres: &[[f64; 2]],
        obstacle: Option<&'s ObstacleState>,
    ) -> Result<Search<'s>, PlanError> {
        let n = self.roadmap.len();
        let mut region = vec![scope == Scope::Global; n];
        if scope == Scope::Local {
            for c in centres {
                for i in self.roadmap.nodes_within(c, self.radius) {
                    region[i] = true;
                }
            }
        }
        let mut s = Search {
            node_ok: RefCell::new(vec![None; n]),
            blocked_edges: RefCell::new(BTreeSet::new()),
            checked_region: region,
            scope,
            masked: 0,
            obstacle,
        };
        if obstacle.is_some() {
            for i in 0..n {
                if s.checked_region[i] && !self.node_ok(&s, i)? {
                    s.masked += 1;
                }
            }
        }
        Ok(s)
    }

    /// Shortest verified route from `q` to the goal joints. The first
    /// segment may start below the threshold; it then only has to stay at
    /// or above `escape_floor`.
    fn route(
        &self,
        q: &JointVector,
        goal: &JointVector,
        s: &mut Search,
        escape_floor: f64,
    ) -> Result<Option<(Vec<usize>, Vec<JointVector>)>, PlanError> {
        let thr = self.cfg.clearance_threshold;
        let obstacle = s.obstacle;
        if !self.pose_clear(goal, obstacle, thr)? {
            return Ok(None);
        }
        let limit = if s.scope == Scope::Global { self.roadmap.len() } else { ENTRY_CANDIDATES };
        let mut entry = None;
        for i in self.candidates(q, obstacle, limit)? {
            if self.node_ok(s, i)?
                && self.segment_clear(q, &self.roadmap.nodes[i].decoded_joints, obstacle, escape_floor)?
            {
                entry = Some(i);
                break;
            }
        }
        let Some(entry) = entry else { return Ok(None) };
        let mut exit = None;
        for i in self.candidates(goal, obstacle, limit)? {
            if self.node_ok(s, i)?
                && self.segment_clear(&self.roadmap.nodes[i].decoded_joints, goal, obstacle, thr)?
            {
                exit = Some(i);
                break;
            }
        }
        let Some(exit) = exit else { return Ok(None) };
        for _ in 0..MAX_REPAIRS {
            let path = {
                let cache = &s.node_ok;
                let region = &s.checked_region;
                let blocked = &s.blocked_edges;
                let allowed = |v: usize| !region[v] || cache.borrow()[v] != Some(false);
                let edge_ok = |u: usize, v: usize| !blocked.borrow().contains(&(u.min(v), u.max(v)));
                match self.roadmap.shortest_path_filtered(entry, exit, &allowed, &edge_ok)? {
                    Some((_, p)) => p,
                    None => return Ok(None),
                }
            };
            let mut broken = false;
            for w in path.windows(2) {
                let (u, v) = (w[0], w[1]);
                if !self.node_ok(s, v)? {
                    s.checked_region[v] = true;
                    s.masked += 1;
                    broken = true;
                    break;
                }
                let (a, b) = (&self.roadmap.nodes[u].decoded_joints, &self.roadmap.nodes[v].decoded_joints);
                if !self.segment_clear(a, b, obstacle, thr)? {
                    s.blocked_edges.borrow_mut().insert((u.min(v), u.max(v)));
                    broken = true;
                    break;
                }
            }
            if !broken {
                let mut waypoints: Vec<JointVector> =
                    path.iter().map(|&i| self.roadmap.nodes[i].decoded_joints).collect();
                waypoints.push(*goal);
                return Ok(Some((path, waypoints)));
            }
        }
        Ok(None)
    }

    /// Local search around `centres`, escalating to the whole graph.
    fn replan(
        &self,
        q: &JointVector,
        goal: &JointVector,
        obstacle: Option<&ObstacleState>,
        extra_centre: Option<[f64; 2]>,
    ) -> Result<Option<Replan>, PlanError> {
        let thr = self.cfg.clearance_threshold;
        let current = self.min_clearance(q, obstacle)?;
        // escape poses may sit at the current clearance, not below it
        let escape = (current <= thr).then(|| current - current.abs() * 1e-12);
        let floor = escape.unwrap_or(thr);
        let mut centres = Vec::new();
        if let Some(z) = self.encode(q, obstacle)? {
            centres.push(z);
        }
        centres.extend(extra_centre);
        for scope in [Scope::Local, Scope::Global] {
            let mut s = self.new_search(scope, &centres, obstacle)?;
            if let Some((path, waypoints)) = self.route(q, goal, &mut s, floor)? {
                return Ok(Some(Replan {
                    scope,
                    path,
                    waypoints,
                    masked: s.masked,
                    escape,
                }));
            }
        }
        Ok(None)
    }

    /// Initial plan against the obstacle at tick 0.
    pub fn plan_initial(
        &self,
        start: &JointVector,
        goal: &JointVector,
        obstacle: Option<&ObstacleState>,
    ) -> Result<PlanState, PlanError> {
        self.robot.check_limits(start).map_err(CollisionError::from)?;
        self.robot.check_limits(goal).map_err(CollisionError::from)?;
        let mut p = PlanState {
            tick: 0,
            joints: *start,
            goal: *goal,
            path: Vec::new(),
            waypoints: Vec::new(),
            progress: 0,
            escape_floor: None,
            status: Status::Following,
            events: Vec::new(),
        };
        if start == goal {
            p.status = Status::Reached;
            p.waypoints.push(*goal);
            p.progress = 1;
            p.events.push(Event {
                tick: 0,
                kind: EventKind::Reached,
            });
            return Ok(p);
        }
        match self.replan(start, goal, obstacle, None)? {
            Some(r) => {
                p.events.push(Event {
                    tick: 0,
                    kind: EventKind::Planned {
                        path: r.path.clone(),
                    },
                });
                p.path = r.path;
                p.waypoints = r.waypoints;
                p.escape_floor = r.escape;
                if r.escape.is_some() {
                    p.status = Status::Replanning;
                }
            }
            None => p.fail(FailReason::Unreachable),
        }
        Ok(p)
    }

    fn lookahead_clear(&self, p: &PlanState, obstacle: Option<&ObstacleState>) -> Result<bool, PlanError> {
        let mut q = p.joints;
        let mut k = p.progress;
        for _ in 0..self.cfg.lookahead {
            let Some(target) = p.waypoints.get(k) else { break };
            q = advance(&q, target, self.cfg.max_joint_step);
            let arrival = q == *target;
            if !self.pose_clear(&q, obstacle, self.floor(p, k, arrival))? {
                return Ok(false);
            }
            if arrival {
                k += 1;
            }
        }
        Ok(true)
    }

    fn floor(&self, p: &PlanState, waypoint: usize, arrival: bool) -> f64 {
        match p.escape_floor {
            Some(f) if waypoint == 0 && !arrival => f,
            _ => self.cfg.clearance_threshold,
        }
    }

    /// Latent coordinates of the next path node, if any.
    fn next_node_coords(&self, p: &PlanState) -> Option<[f64; 2]> {
        p.path.get(p.progress).map(|&i| self.roadmap.nodes[i].coords)
    }

    fn try_reroute(
        &self,
        p: &mut PlanState,
        obstacle: Option<&ObstacleState>,
    ) -> Result<Option<EventKind>, PlanError> {
        match self.replan(&p.joints, &p.goal, obstacle, self.next_node_coords(p))? {
            Some(r) => {
                p.path = r.path.clone();
                p.waypoints = r.waypoints;
                p.progress = 0;
                p.escape_floor = r.escape;
                p.status = Status::Following;
                Ok(Some(EventKind::Reroute {
                    scope: r.scope,
                    path: r.path,
                    masked: r.masked,
                }))
            }
            None => {
                p.fail(FailReason::Trapped);
                Ok(Some(EventKind::Failed(FailReason::Trapped)))
            }
        }
    }

    /// Advances the plan by one tick against `obstacle` (the obstacle
    /// sensed for the new tick).
    pub fn step(&self, p: &mut PlanState, obstacle: Option<&ObstacleState>) -> Result<TickOutcome, PlanError> {
        p.tick += 1;
        if p.status.is_terminal() {
            return Ok(TickOutcome {
                arrival: false,
                event: None,
            });
        }
        let checking = p.tick % self.cfg.check_period == 0;
        let mut event = None;
        let mut rerouted = false;
        if p.status == Status::Replanning || (checking && !self.lookahead_clear(p, obstacle)?) {
            event = self.try_reroute(p, obstacle)?;
            rerouted = true;
            if p.status.is_terminal() {
                return Ok(TickOutcome { arrival: false, event });
            }
        }
        let mut moved = false;
        let mut arrival = false;
        loop {
            let target = p.waypoints[p.progress];
            let next = advance(&p.joints, &target, self.cfg.max_joint_step);
            let lands = next == target;
            let floor = self.floor(p, p.progress, lands);
            if !checking || self.pose_clear(&next, obstacle, floor)? {
                p.joints = next;
                moved = true;
                if lands {
                    arrival = true;
                    p.progress += 1;
                    p.escape_floor = None;
                }
                break;
            }
            if rerouted {
                break;
            }
            event = self.try_reroute(p, obstacle)?;
            rerouted = true;
            if p.status.is_terminal() {
                return Ok(TickOutcome { arrival: false, event });
            }
        }
        if !moved {
            p.status = Status::Replanning;
            if event.is_none() {
                event = Some(EventKind::Halt);
            }
        }
        if let Some(k) = &event {
            p.events.push(Event {
                tick: p.tick,
                kind: k.clone(),
            });
        }
        if p.progress == p.waypoints.len() {
            let reached = self.robot.forward_kinematics(&p.joints).map_err(CollisionError::from)?;
            let goal = self.robot.forward_kinematics(&p.goal).map_err(CollisionError::from)?;
            if (reached.position - goal.position).norm() <= self.cfg.goal_tolerance {
                p.status = Status::Reached;
                p.events.push(Event {
                    tick: p.tick,
                    kind: EventKind::Reached,
                });
                if event.is_none() {
                    event = Some(EventKind::Reached);
                }
            }
        }
        Ok(TickOutcome { arrival, event })
    }

    /// Seeds `scenario`, fills the trace header and runs it.
    pub fn simulate(
        &self,
        scenario: &Scenario,
        seed: u64,
        max_ticks: u64,
        lineage: &Lineage,
    ) -> Result<(PlanState, Trace), PlanError> {
        let seeded = scenario.with_seed(seed);
        let c = &self.cfg;
        let header = TraceHeader {
            format: TRACE_FORMAT_VERSION,
            tool_version: lineage.tool_version.clone(),
            config_hash: lineage.config_hash.clone(),
            model_hash: lineage.model_hash.clone(),
            roadmap_hash: lineage.roadmap_hash.clone(),
            robot_hash: self.robot.content_hash(),
            scenario_id: scenario.id.clone(),
            scenario_hash: scenario.content_hash(),
            seed,
            max_ticks,
            safety: SafetyRecord {
                clearance_threshold: c.clearance_threshold,
                check_period: c.check_period,
                relabel_radius: self.radius,
                max_joint_step: c.max_joint_step,
                goal_tolerance: c.goal_tolerance,
                lookahead: c.lookahead,
            },
            start: scenario.start.0,
            goal: scenario.goal.0,
            initial_path: Vec::new(),
        };
        self.execute(&seeded, max_ticks, header)
    }

    /// Runs the scenario (already seeded) until the plan terminates or
    /// `max_ticks` records have been produced.
    pub fn execute(
        &self,
        scenario: &Scenario,
        max_ticks: u64,
        header: TraceHeader,
    ) -> Result<(PlanState, Trace), PlanError> {
        let o0 = scenario.obstacle_at(0)?;
        let mut p = self.plan_initial(&scenario.start, &scenario.goal, o0.as_ref())?;
        let mut trace = Trace::new(header);
        trace.header.initial_path = p.path.clone();
        let first_event = p.events.last().map(|e| e.kind.clone());
        trace.push_tick(self.record(&p, o0.as_ref(), false, first_event.as_ref())?);
        while !p.status.is_terminal() && p.tick + 1 < max_ticks {
            let o = scenario.obstacle_at(p.tick + 1)?;
            let out = self.step(&mut p, o.as_ref())?;
            trace.push_tick(self.record(&p, o.as_ref(), out.arrival, out.event.as_ref())?);
        }
        if !p.status.is_terminal() {
            p.fail(FailReason::Timeout);
            if let Some(last) = trace.ticks_mut().last_mut() {
                last.status = p.status.name().into();
                last.event = Some(trace::event_json(&EventKind::Failed(FailReason::Timeout)));
            }
        }
        let ee = self.robot.forward_kinematics(&p.joints).map_err(CollisionError::from)?;
        let goal = self.robot.forward_kinematics(&p.goal).map_err(CollisionError::from)?;
        trace.finish(&p, (ee.position - goal.position).norm());
        Ok((p, trace))
    }

    /// First tick at which the initial plan, followed blindly, would come
    /// within the clearance threshold of the scenario's obstacles.
    pub fn initial_conflict(&self, scenario: &Scenario) -> Result<Option<u64>, PlanError> {
        let o0 = scenario.obstacle_at(0)?;
        let p = self.plan_initial(&scenario.start, &scenario.goal, o0.as_ref())?;
        if p.status.is_terminal() {
            return Ok(None);
        }
        let mut q = p.joints;
        let mut poses = vec![q];
        for w in &p.waypoints {
            while q != *w {
                q = advance(&q, w, self.cfg.max_joint_step);
                poses.push(q);
            }
        }
        for (t, q) in poses.iter().enumerate() {
            let t = t as u64;
            if let Some(o) = scenario.obstacle_at(t)? {
                if let Some(c) = o.clearance(self.robot, q)? {
                    if c.report.min_distance <= self.cfg.clearance_threshold {
                        return Ok(Some(t));
                    }
                }
            }
        }
        Ok(None)
    }

    fn record(
        &self,
        p: &PlanState,
        obstacle: Option<&ObstacleState>,
        arrival: bool,
        event: Option<&EventKind>,
    ) -> Result<TickRecord, PlanError> {
        let ee = self.robot.forward_kinematics(&p.joints).map_err(CollisionError::from)?;
        let (clear, id, link) = match obstacle {
            None => (None, None, None),
            Some(o) => match o.clearance(self.robot, &p.joints)? {
                None => (None, None, None),
                Some(c) => (
                    Some(c.report.min_distance),
                    Some(o.members[c.member].id.clone()),
                    Some(c.report.argmin_link),
                ),
            },
        };
        Ok(TickRecord {
            tick: p.tick,
            joints: p.joints.0,
            ee_pos: [ee.position.x, ee.position.y, ee.position.z],
            ee_quat: ee.quat_wxyz(),
            obstacle_id: id,
            obstacle_pose: obstacle.map(trace::members).unwrap_or_default(),
            min_clearance: clear,
            argmin_link: link,
            status: p.status.name().into(),
            waypoint: p.progress,
            arrival,
            event: event.map(trace::event_json),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advance_respects_cap_and_lands_exactly() {
        let a = JointVector::zeros();
        let mut b = JointVector::zeros();
        b.0[2] = 0.12;
        b.0[4] = -0.06;
        let poses = segment_poses(&a, &b, 0.05);
        assert_eq!(poses.len(), 3);
        assert_eq!(*poses.last().unwrap(), b);
        let mut prev = a;
        for q in &poses {
            assert!(q.max_abs_diff(&prev) <= 0.05 + 1e-15);
            prev = *q;
        }
        assert!(segment_poses(&a, &a, 0.05).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(SafetyConfig::default().validate(0.0).is_ok());
        let c = SafetyConfig {
            clearance_threshold: 0.01,
            ..SafetyConfig::default()
        };
        assert!(c.validate(0.02).is_err());
        let c = SafetyConfig {
            check_period: 0,
            ..SafetyConfig::default()
        };
        assert!(c.validate(0.0).is_err());
    }
}
