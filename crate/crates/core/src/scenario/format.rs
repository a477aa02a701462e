//! Sectioned text format for scenarios (grammar in `docs/formats.md`).

use std::fmt::Write as _;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::{Category, Keyframe, ObstacleTrack, Scenario, ScenarioError};
use crate::collision::ShapeKind;
use crate::robot::{JointVector, Pose, DOF};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "latentroute-scenario";

#[derive(Clone, Copy)]
struct Tok<'a> {
    line: usize,
    col: usize,
    text: &'a str,
}

fn err(t: &Tok, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line: t.line,
        column: t.col,
        token: t.text.to_string(),
        message: message.into(),
    }
}

fn end_of_line(line: usize, col: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        column: col,
        token: String::new(),
        message: message.into(),
    }
}

fn tokenize(line: usize, raw: &str) -> Vec<Tok<'_>> {
    let content = raw.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in content.char_indices().chain(std::iter::once((content.len(), ' '))) {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(Tok {
                    line,
                    col: content[..s].chars().count() + 1,
                    text: &content[s..i],
                });
                start = None;
            }
            _ => {}
        }
    }
    out
}

fn num<T: std::str::FromStr>(t: &Tok) -> Result<T, ScenarioError> {
    t.text.parse().map_err(|_| err(t, format!("invalid number `{}`", t.text)))
}

fn finite(t: &Tok) -> Result<f64, ScenarioError> {
    let v: f64 = num(t)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err(t, "number must be finite"))
    }
}

fn joints(key: &Tok, vals: &[Tok]) -> Result<JointVector, ScenarioError> {
    if vals.len() != DOF {
        return Err(err(key, format!("{} expects {DOF} joint values, got {}", key.text, vals.len())));
    }
    let mut q = [0.0; DOF];
    for (v, t) in q.iter_mut().zip(vals) {
        *v = finite(t)?;
    }
    Ok(JointVector(q))
}

fn single<'a>(key: &Tok, vals: &'a [Tok<'a>]) -> Result<&'a Tok<'a>, ScenarioError> {
    match vals {
        [v] => Ok(v),
        _ => Err(err(key, format!("{} expects one value", key.text))),
    }
}

fn dims_for(kind: &str) -> Option<usize> {
    Some(match kind {
        "sphere" => 1,
        "box" => 3,
        "cylinder" | "capsule" => 2,
        _ => return None,
    })
}

/// Exact for already-unit input so that text round trips are bit-exact.
fn unit_quaternion(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    if (q.norm() - 1.0).abs() < 1e-12 {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::from_quaternion(q)
    }
}

fn keyframe(toks: &[Tok]) -> Result<Keyframe, ScenarioError> {
    let tick: u64 = num(&toks[0])?;
    let kind_tok = toks
        .get(1)
        .ok_or_else(|| err(&toks[0], "keyframe needs a shape kind"))?;
    let n = dims_for(kind_tok.text)
        .ok_or_else(|| err(kind_tok, format!("unknown shape kind `{}`", kind_tok.text)))?;
    let rest = &toks[2..];
    let groups: Vec<&[Tok]> = rest.split(|t| t.text == "|").collect();
    let last = toks.last().unwrap();
    if !(groups.len() == 2 || groups.len() == 3) {
        return Err(err(last, "keyframe row is `tick kind dims | x y z [| w x y z]`"));
    }
    if groups[0].len() != n {
        return Err(err(kind_tok, format!("{} expects {n} dimensions, got {}", kind_tok.text, groups[0].len())));
    }
    let dims = groups[0].iter().map(finite).collect::<Result<Vec<_>, _>>()?;
    let kind = ShapeKind::from_dims(kind_tok.text, &dims).map_err(|e| err(kind_tok, e.to_string()))?;
    if groups[1].len() != 3 {
        return Err(err(last, "position needs 3 values"));
    }
    let p = groups[1].iter().map(finite).collect::<Result<Vec<_>, _>>()?;
    let orientation = match groups.get(2) {
        None => UnitQuaternion::identity(),
        Some(g) if g.len() == 4 => {
            let w = g.iter().map(finite).collect::<Result<Vec<_>, _>>()?;
            let q = Quaternion::new(w[0], w[1], w[2], w[3]);
            if q.norm() < 1e-9 {
                return Err(err(&g[0], "orientation quaternion must be non-zero"));
            }
            unit_quaternion(q)
        }
        Some(_) => return Err(err(last, "orientation needs 4 values (w x y z)")),
    };
    Ok(Keyframe {
        tick,
        kind,
        pose: Pose {
            position: Vector3::new(p[0], p[1], p[2]),
            orientation,
        },
    })
}

enum Section {
    None,
    Scenario,
    Obstacle { keyframes: bool },
}

#[derive(Default)]
struct Header {
    id: Option<String>,
    description: String,
    category: Option<Category>,
    robot: Option<String>,
    tick_seconds: Option<f64>,
    max_ticks: Option<u64>,
    seed: Option<u64>,
    jitter: Option<f64>,
    start: Option<JointVector>,
    goal: Option<JointVector>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut section = Section::None;
        let mut seen_magic = false;
        let mut h = Header::default();
        let mut obstacles: Vec<ObstacleTrack> = Vec::new();
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let toks = tokenize(line, raw);
            let Some(first) = toks.first() else { continue };
            if !seen_magic {
                if first.text != MAGIC {
                    return Err(err(first, format!("expected `{MAGIC} {FORMAT_VERSION}` header")));
                }
                let v = toks.get(1).ok_or_else(|| end_of_line(line, raw.len() + 1, "missing version"))?;
                let version: u32 = num(v)?;
                if version != FORMAT_VERSION || toks.len() != 2 {
                    return Err(err(v, format!("unsupported scenario version {}", v.text)));
                }
                seen_magic = true;
                continue;
            }
            if first.text.starts_with('[') {
                let joined: Vec<&str> = toks.iter().map(|t| t.text).collect();
                let head = joined.join(" ");
                let inner = head
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(|| err(first, "malformed section header"))?;
                let parts: Vec<&str> = inner.split_whitespace().collect();
                section = match parts.as_slice() {
                    ["scenario"] => Section::Scenario,
                    ["obstacle", id] => {
                        obstacles.push(ObstacleTrack {
                            id: id.to_string(),
                            appear: 0,
                            vanish: None,
                            keyframes: Vec::new(),
                        });
                        Section::Obstacle { keyframes: false }
                    }
                    _ => return Err(err(first, format!("unknown section `{head}`"))),
                };
                continue;
            }
            match &mut section {
                Section::None => return Err(err(first, "content before any section")),
                Section::Obstacle { keyframes: true } => {
                    let o = obstacles.last_mut().unwrap();
                    o.keyframes.push(keyframe(&toks)?);
                }
                Section::Obstacle { keyframes } => {
                    let o = obstacles.last_mut().unwrap();
                    if first.text == "keyframes" && toks.len() == 1 {
                        *keyframes = true;
                        continue;
                    }
                    let (key, vals) = key_value(&toks)?;
                    match key.text {
                        "appear" => o.appear = num(single(key, vals)?)?,
                        "vanish" => o.vanish = Some(num(single(key, vals)?)?),
                        _ => return Err(err(key, format!("unknown obstacle key `{}`", key.text))),
                    }
                }
                Section::Scenario => {
                    let (key, vals) = key_value(&toks)?;
                    match key.text {
                        "id" => h.id = Some(single(key, vals)?.text.to_string()),
                        "description" => {
                            let eq = raw.find('=').unwrap();
                            h.description = raw[eq + 1..].split('#').next().unwrap().trim().to_string();
                        }
                        "category" => {
                            let v = single(key, vals)?;
                            h.category = Some(
                                Category::parse(v.text)
                                    .ok_or_else(|| err(v, format!("unknown category `{}`", v.text)))?,
                            );
                        }
                        "robot" => h.robot = Some(single(key, vals)?.text.to_string()),
                        "tick_seconds" => h.tick_seconds = Some(finite(single(key, vals)?)?),
                        "max_ticks" => h.max_ticks = Some(num(single(key, vals)?)?),
                        "seed" => h.seed = Some(num(single(key, vals)?)?),
                        "jitter" => h.jitter = Some(finite(single(key, vals)?)?),
                        "start" => h.start = Some(joints(key, vals)?),
                        "goal" => h.goal = Some(joints(key, vals)?),
                        _ => return Err(err(key, format!("unknown scenario key `{}`", key.text))),
                    }
                }
            }
        }
        let missing = |what: &str| end_of_line(last_line + 1, 1, format!("missing {what}"));
        if !seen_magic {
            return Err(missing("header"));
        }
        for o in &obstacles {
            if o.keyframes.is_empty() {
                return Err(missing(&format!("keyframes for obstacle {}", o.id)));
            }
        }
        Ok(Scenario {
            id: h.id.ok_or_else(|| missing("id"))?,
            description: h.description,
            category: h.category.ok_or_else(|| missing("category"))?,
            robot: h.robot.unwrap_or_else(|| "panda".into()),
            tick_seconds: h.tick_seconds.unwrap_or(0.05),
            max_ticks: h.max_ticks.unwrap_or(2000),
            seed: h.seed.unwrap_or(0),
            jitter: h.jitter.unwrap_or(0.0),
            start: h.start.ok_or_else(|| missing("start"))?,
            goal: h.goal.ok_or_else(|| missing("goal"))?,
            obstacles,
        })
    }

    /// Canonical text; `parse(to_text())` reproduces the scenario exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(s, "[scenario]");
        let _ = writeln!(s, "id = {}", self.id);
        let _ = writeln!(s, "description = {}", self.description);
        let _ = writeln!(s, "category = {}", self.category.name());
        let _ = writeln!(s, "robot = {}", self.robot);
        let _ = writeln!(s, "tick_seconds = {}", self.tick_seconds);
        let _ = writeln!(s, "max_ticks = {}", self.max_ticks);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "jitter = {}", self.jitter);
        let _ = writeln!(s, "start = {}", join(&self.start.0));
        let _ = writeln!(s, "goal = {}", join(&self.goal.0));
        for o in &self.obstacles {
            let _ = writeln!(s, "\n[obstacle {}]", o.id);
            let _ = writeln!(s, "appear = {}", o.appear);
            if let Some(v) = o.vanish {
                let _ = writeln!(s, "vanish = {v}");
            }
            let _ = writeln!(s, "keyframes");
            for k in &o.keyframes {
                let q = k.pose.orientation.quaternion();
                let _ = writeln!(
                    s,
                    "{} {} {} | {} | {}",
                    k.tick,
                    k.kind.name(),
                    join(&k.kind.dims()),
                    join(k.pose.position.as_slice()),
                    join(&[q.w, q.i, q.j, q.k])
                );
            }
        }
        s
    }
}

fn key_value<'a>(toks: &'a [Tok<'a>]) -> Result<(&'a Tok<'a>, &'a [Tok<'a>]), ScenarioError> {
    match toks {
        [key, eq, rest @ ..] if eq.text == "=" => Ok((key, rest)),
        [key, ..] => Err(err(key, "expected `key = value`")),
        [] => unreachable!(),
    }
}
