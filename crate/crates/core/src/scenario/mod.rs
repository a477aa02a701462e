//! Scripted obstacle timelines: moving, appearing and morphing convex
//! shapes sampled per control tick.

mod format;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::collision::{
    capsules_clearance, link_capsules, ClearanceReport, CollisionError, ConvexShape, ShapeKind,
};
use crate::robot::{JointVector, Pose, RobotModel};
use crate::util::content_hash;

pub use format::FORMAT_VERSION;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        token: String,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown builtin scenario `{0}`")]
    UnknownBuiltin(String),
    #[error(transparent)]
    Collision(#[from] CollisionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// No obstacle touches the straight route.
    Clear,
    Static,
    Crossing,
    Morph,
    Multi,
    /// The goal becomes enclosed; the only correct outcome is `trapped`.
    Trapped,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Clear => "clear",
            Category::Static => "static",
            Category::Crossing => "crossing",
            Category::Morph => "morph",
            Category::Multi => "multi",
            Category::Trapped => "trapped",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Some(match s {
            "clear" => Category::Clear,
            "static" => Category::Static,
            "crossing" => Category::Crossing,
            "morph" => Category::Morph,
            "multi" => Category::Multi,
            "trapped" => Category::Trapped,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub tick: u64,
    pub kind: ShapeKind,
    pub pose: Pose,
}

/// One obstacle's script. Between keyframes of the same kind the
/// dimensions interpolate linearly; across kinds the shape swaps at the
/// later keyframe. Position interpolates linearly, orientation by slerp.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleTrack {
    pub id: String,
    pub appear: u64,
    /// First tick at which the obstacle is gone.
    pub vanish: Option<u64>,
    pub keyframes: Vec<Keyframe>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub id: String,
    pub shape: ConvexShape,
}

/// Obstacle snapshot at one tick: the union of the present members.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleState {
    pub members: Vec<Member>,
}

/// Clearance against a union of shapes, with the member that attains it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnionClearance {
    pub report: ClearanceReport,
    pub member: usize,
}

impl ObstacleState {
    /// Minimum over members of the per-link clearance.
    pub fn clearance(
        &self,
        robot: &RobotModel,
        q: &JointVector,
    ) -> Result<Option<UnionClearance>, CollisionError> {
        robot.check_limits(q)?;
        let caps = link_capsules(robot, q);
        let mut best: Option<UnionClearance> = None;
        for (i, m) in self.members.iter().enumerate() {
            let r = capsules_clearance(&caps, &m.shape)?;
            if best.is_none_or(|b| r.min_distance < b.report.min_distance) {
                best = Some(UnionClearance {
                    report: r,
                    member: i,
                });
            }
        }
        Ok(best)
    }

    pub fn shapes(&self) -> Vec<ConvexShape> {
        self.members.iter().map(|m| m.shape.clone()).collect()
    }

    /// Representative position (first member), used to fill the encoder's
    /// obstacle fields.
    pub fn anchor(&self) -> Option<Vector3<f64>> {
        self.members.first().map(|m| m.shape.pose.position)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub description: String,
    pub category: Category,
    pub robot: String,
    pub tick_seconds: f64,
    pub max_ticks: u64,
    pub seed: u64,
    /// Half-width of the seeded translation applied to each obstacle.
    pub jitter: f64,
    pub start: JointVector,
    pub goal: JointVector,
    pub obstacles: Vec<ObstacleTrack>,
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + (b - a) * s
}

impl ObstacleTrack {
    pub fn present(&self, tick: u64) -> bool {
        tick >= self.appear && self.vanish.is_none_or(|v| tick < v)
    }

    pub fn shape_at(&self, tick: u64) -> Result<ConvexShape, CollisionError> {
        let k = &self.keyframes;
        let i = k.partition_point(|f| f.tick <= tick);
        if i == 0 {
            return ConvexShape::new(k[0].kind.clone(), k[0].pose);
        }
        let a = &k[i - 1];
        if i == k.len() || a.tick == tick {
            return ConvexShape::new(a.kind.clone(), a.pose);
        }
        let b = &k[i];
        let s = (tick - a.tick) as f64 / (b.tick - a.tick) as f64;
        let position = a.pose.position.lerp(&b.pose.position, s);
        let orientation = a.pose.orientation.slerp(&b.pose.orientation, s);
        let kind = if a.kind.name() == b.kind.name() {
            let (da, db) = (a.kind.dims(), b.kind.dims());
            let dims: Vec<f64> = da.iter().zip(db.iter()).map(|(x, y)| lerp(*x, *y, s)).collect();
            ShapeKind::from_dims(a.kind.name(), &dims)?
        } else {
            a.kind.clone()
        };
        ConvexShape::new(
            kind,
            Pose {
                position,
                orientation,
            },
        )
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(format!("obstacle {}: {m}", self.id)));
        if self.keyframes.is_empty() {
            return bad("no keyframes".into());
        }
        if self.keyframes.windows(2).any(|w| w[0].tick >= w[1].tick) {
            return bad("keyframe ticks must be strictly increasing".into());
        }
        if self.vanish.is_some_and(|v| v <= self.appear) {
            return bad("vanish must come after appear".into());
        }
        for f in &self.keyframes {
            if matches!(f.kind, ShapeKind::Hull { .. }) {
                return bad("hull shapes are not supported in scenarios".into());
            }
            f.kind.validate()?;
        }
        Ok(())
    }
}

impl Scenario {
    pub fn validate(&self, robot: &RobotModel) -> Result<(), ScenarioError> {
        if self.id.is_empty() || self.id.chars().any(char::is_whitespace) {
            return Err(ScenarioError::Invalid("id must be a single non-empty word".into()));
        }
        if !(self.tick_seconds > 0.0 && self.tick_seconds.is_finite()) {
            return Err(ScenarioError::Invalid("tick_seconds must be positive".into()));
        }
        if self.max_ticks == 0 {
            return Err(ScenarioError::Invalid("max_ticks must be positive".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(ScenarioError::Invalid("jitter must be non-negative".into()));
        }
        for (what, q) in [("start", &self.start), ("goal", &self.goal)] {
            robot
                .check_limits(q)
                .map_err(|e| ScenarioError::Invalid(format!("{what}: {e}")))?;
        }
        let mut ids = std::collections::BTreeSet::new();
        for o in &self.obstacles {
            if !ids.insert(o.id.as_str()) {
                return Err(ScenarioError::Invalid(format!("duplicate obstacle id {}", o.id)));
            }
            o.validate()?;
        }
        Ok(())
    }

    /// Present members at `tick`; `None` when no obstacle is present.
    pub fn obstacle_at(&self, tick: u64) -> Result<Option<ObstacleState>, CollisionError> {
        let mut members = Vec::new();
        for o in &self.obstacles {
            if o.present(tick) {
                members.push(Member {
                    id: o.id.clone(),
                    shape: o.shape_at(tick)?,
                });
            }
        }
        Ok((!members.is_empty()).then_some(ObstacleState { members }))
    }

    /// Copy whose obstacles are rigidly translated by a seeded offset in
    /// `[-jitter, jitter]^3` (one offset per obstacle). `seed` is recorded.
    pub fn with_seed(&self, seed: u64) -> Scenario {
        let mut s = self.clone();
        s.seed = seed;
        if self.jitter > 0.0 {
            for (i, o) in s.obstacles.iter_mut().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let j = self.jitter;
                let off = Vector3::new(
                    rng.random_range(-j..=j),
                    rng.random_range(-j..=j),
                    rng.random_range(-j..=j),
                );
                for f in &mut o.keyframes {
                    f.pose.position += off;
                }
            }
        }
        s
    }

    /// Hash of the canonical text, covering every field.
    pub fn content_hash(&self) -> String {
        content_hash(self.to_text().as_bytes())
    }
}

/// Quaternion from `[w, x, y, z]`, normalised.
pub fn quat_from_wxyz(q: [f64; 4]) -> Option<UnitQuaternion<f64>> {
    let raw = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    (raw.norm() > 1e-12).then(|| UnitQuaternion::from_quaternion(raw))
}

const BUILTINS: [(&str, &str); 7] = [
    ("open_reach", include_str!("builtin/open_reach.scn")),
    ("static_blocker", include_str!("builtin/static_blocker.scn")),
    ("crossing_mover", include_str!("builtin/crossing_mover.scn")),
    ("morphing_block", include_str!("builtin/morphing_block.scn")),
    ("two_obstacles", include_str!("builtin/two_obstacles.scn")),
    ("late_arrival", include_str!("builtin/late_arrival.scn")),
    ("trapped_goal", include_str!("builtin/trapped_goal.scn")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|b| b.0).collect()
}

pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    let text = BUILTINS
        .iter()
        .find(|b| b.0 == name)
        .ok_or_else(|| ScenarioError::UnknownBuiltin(name.into()))?
        .1;
    Scenario::parse(text)
}

pub fn builtin_text(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|b| b.0 == name).map(|b| b.1)
}

pub fn builtin_suite() -> Vec<Scenario> {
    BUILTINS
        .iter()
        .map(|b| Scenario::parse(b.1).expect("builtin scenarios parse"))
        .collect()
}
