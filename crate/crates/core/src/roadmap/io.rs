//! Plain-text roadmap file.
//!
//! ```text
//! latentroute-roadmap 1
//! tool_version <v>
//! config_hash <hex>
//! model_hash <hex>
//! dataset_hash <hex>
//! params <k> <grid_resolution> <margin> <flag_threshold> <bridge_factor>
//! nodes <n>
//! <x> <y> <label> <origin> <flag_score> <q0> .. <q6>
//! edges <m>
//! <u> <v> <weight>
//! ```
//! Floats use the shortest representation that parses back exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::graph::adjacency_from_edges;
use super::{BuildParams, Label, LatentPoint, Origin, Roadmap, RoadmapError};
use crate::robot::{JointVector, DOF};
use crate::util::content_hash;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "latentroute-roadmap";

impl Roadmap {
    pub fn to_text(&self, tool_version: &str) -> String {
        let mut s = String::new();
        let p = &self.params;
        let _ = writeln!(s, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(s, "tool_version {tool_version}");
        let _ = writeln!(s, "config_hash {}", or_dash(&self.config_hash));
        let _ = writeln!(s, "model_hash {}", or_dash(&self.model_hash));
        let _ = writeln!(s, "dataset_hash {}", or_dash(&self.dataset_hash));
        let _ = writeln!(
            s,
            "params {} {} {} {} {}",
            p.k, p.grid_resolution, p.margin, p.flag_threshold, p.bridge_factor
        );
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for n in &self.nodes {
            let label = match n.label {
                Label::Safe => "safe",
                Label::Colliding => "colliding",
            };
            let _ = write!(
                s,
                "{} {} {label} {} {}",
                n.coords[0],
                n.coords[1],
                n.origin.name(),
                n.flag_score
            );
            for q in n.decoded_joints.0 {
                let _ = write!(s, " {q}");
            }
            s.push('\n');
        }
        let edges = self.edges();
        let _ = writeln!(s, "edges {}", edges.len());
        for (u, v, w) in edges {
            let _ = writeln!(s, "{u} {v} {w}");
        }
        s
    }

    pub fn content_hash(&self) -> String {
        content_hash(self.to_text("").as_bytes())
    }

    pub fn from_text(text: &str) -> Result<(Roadmap, String), RoadmapError> {
        let mut lines = Lines {
            inner: text.lines().enumerate(),
        };
        let err = |line: usize, message: String| RoadmapError::Parse { line, message };
        fn num<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, RoadmapError> {
            tok.and_then(|t| t.parse().ok()).ok_or_else(|| RoadmapError::Parse {
                line,
                message: format!("invalid or missing {what}"),
            })
        }
        let (ln, head) = lines.next("header")?;
        let mut h = head.split_whitespace();
        if h.next() != Some(MAGIC) {
            return Err(err(ln, "not a roadmap file".into()));
        }
        let version: u32 = num(h.next(), ln, "version")?;
        if version != FORMAT_VERSION {
            return Err(err(ln, format!("unsupported roadmap version {version}")));
        }
        let (_, tool_version) = lines.keyed("tool_version")?;
        let (_, config_hash) = lines.keyed("config_hash")?;
        let (_, model_hash) = lines.keyed("model_hash")?;
        let (_, dataset_hash) = lines.keyed("dataset_hash")?;
        let (pl, params) = lines.keyed("params")?;
        let mut t = params.split_whitespace();
        let params = BuildParams {
            k: num(t.next(), pl, "k")?,
            grid_resolution: num(t.next(), pl, "grid resolution")?,
            margin: num(t.next(), pl, "margin")?,
            flag_threshold: num(t.next(), pl, "flag threshold")?,
            bridge_factor: num(t.next(), pl, "bridge factor")?,
        };
        let (nl, count) = lines.keyed("nodes")?;
        let n: usize = num(Some(&count), nl, "node count")?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = lines.next("node")?;
            let mut t = l.split_whitespace();
            let x = num(t.next(), ln, "x")?;
            let y = num(t.next(), ln, "y")?;
            let label = match t.next() {
                Some("safe") => Label::Safe,
                Some("colliding") => Label::Colliding,
                other => return Err(err(ln, format!("invalid label {other:?}"))),
            };
            let origin = match t.next() {
                Some("dataset") => Origin::Dataset,
                Some("grid") => Origin::Grid,
                other => return Err(err(ln, format!("invalid origin {other:?}"))),
            };
            let flag_score = num(t.next(), ln, "flag score")?;
            let mut q = [0.0; DOF];
            for v in q.iter_mut() {
                *v = num(t.next(), ln, "joint value")?;
            }
            if t.next().is_some() {
                return Err(err(ln, "trailing tokens".into()));
            }
            nodes.push(LatentPoint {
                coords: [x, y],
                label,
                origin,
                flag_score,
                decoded_joints: JointVector(q),
            });
        }
        let (el, count) = lines.keyed("edges")?;
        let m: usize = num(Some(&count), el, "edge count")?;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, l) = lines.next("edge")?;
            let mut t = l.split_whitespace();
            let u: usize = num(t.next(), ln, "edge start")?;
            let v: usize = num(t.next(), ln, "edge end")?;
            let w: f64 = num(t.next(), ln, "edge weight")?;
            if u >= n || v >= n || u == v || !(w > 0.0) {
                return Err(err(ln, format!("invalid edge {u} {v} {w}")));
            }
            edges.push((u, v, w));
        }
        let adjacency = adjacency_from_edges(n, &edges);
        let mut r = Roadmap::from_parts(nodes, adjacency, params);
        r.config_hash = from_dash(config_hash);
        r.model_hash = from_dash(model_hash);
        r.dataset_hash = from_dash(dataset_hash);
        r.check_invariants()?;
        Ok((r, tool_version))
    }

    pub fn save(&self, path: &Path, tool_version: &str) -> Result<(), RoadmapError> {
        fs::write(path, self.to_text(tool_version))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Roadmap, String), RoadmapError> {
        Roadmap::from_text(&fs::read_to_string(path)?)
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), RoadmapError> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| RoadmapError::Parse {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            })
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, String), RoadmapError> {
        let (ln, l) = self.next(key)?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok((ln, v.trim().to_string())),
            _ => Err(RoadmapError::Parse {
                line: ln,
                message: format!("expected `{key}`"),
            }),
        }
    }
}

fn or_dash(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

fn from_dash(s: String) -> String {
    if s == "-" {
        String::new()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::super::build_knn;
    use super::super::tests::point;
    use super::*;

    fn sample() -> Roadmap {
        let mut pts: Vec<LatentPoint> = (0..12)
            .map(|i| point((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos() / 3.0))
            .collect();
        pts[3].origin = Origin::Grid;
        pts[4].decoded_joints = JointVector([0.1, -0.2, 0.3, -1.5, 0.0, 1.9, 0.785]);
        pts[5].flag_score = 0.123456789;
        let mut r = build_knn(pts, 3).unwrap();
        r.model_hash = "abc".into();
        r
    }

    #[test]
    fn text_round_trip_is_exact() {
        let r = sample();
        let text = r.to_text("9.9.9");
        let (back, ver) = Roadmap::from_text(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(ver, "9.9.9");
        assert_eq!(back.to_text("9.9.9"), text);
        assert_eq!(back.content_hash(), r.content_hash());
    }

    #[test]
    fn malformed_files_report_lines() {
        let text = sample().to_text("1");
        let broken = text.replacen(" safe ", " maybe ", 1);
        match Roadmap::from_text(&broken) {
            Err(RoadmapError::Parse { line, .. }) => assert_eq!(line, 8),
            other => panic!("{other:?}"),
        }
        assert!(Roadmap::from_text("latentroute-roadmap 7\n").is_err());
        let truncated: String = text.lines().take(12).collect::<Vec<_>>().join("\n");
        assert!(Roadmap::from_text(&truncated).is_err());
    }
}
