//! Navigable graph over safe latent points.
//!
//! Nodes come from encoded safe samples plus a decoded grid mesh; edges
//! join k nearest latent neighbours, weighted by latent distance. Small
//! components are bridged to the main one or dropped.

mod build;
pub mod graph;
mod io;
pub mod kdtree;

use thiserror::Error;

use crate::robot::JointVector;
use crate::util::median;

pub use build::{
    build_knn, build_roadmap, densify_grid, encode_safe_samples, ensure_connected, BuildReport,
    ConnectReport, GridResult, LatentBounds,
};
pub use graph::Adjacency;
pub use io::FORMAT_VERSION;

use kdtree::KdTree;

#[derive(Debug, Error)]
pub enum RoadmapError {
    #[error("invalid roadmap parameters: {0}")]
    InvalidParams(String),
    #[error("point {0} is not labelled safe")]
    NotSafe(usize),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("roadmap line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("roadmap invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Vae(#[from] crate::vae::VaeError),
    #[error(transparent)]
    Collision(#[from] crate::collision::CollisionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Safe,
    Colliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Dataset,
    Grid,
}

impl Origin {
    pub fn name(self) -> &'static str {
        match self {
            Origin::Dataset => "dataset",
            Origin::Grid => "grid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentPoint {
    pub coords: [f64; 2],
    pub label: Label,
    pub origin: Origin,
    /// Decoded collision score in `[0, 1]`.
    pub flag_score: f64,
    pub decoded_joints: JointVector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    pub k: usize,
    pub grid_resolution: usize,
    /// Grid bounds grow by this fraction of the encoded cloud's extent.
    pub margin: f64,
    pub flag_threshold: f64,
    /// Bridge-length cap as a multiple of the median k-NN edge.
    pub bridge_factor: f64,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            k: 8,
            grid_resolution: 100,
            margin: 0.05,
            flag_threshold: 0.5,
            bridge_factor: 3.0,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<(), RoadmapError> {
        let bad = |m: &str| Err(RoadmapError::InvalidParams(m.into()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.grid_resolution == 1 {
            return bad("grid resolution must be 0 (off) or at least 2");
        }
        if !(self.margin >= 0.0) || !(self.bridge_factor > 0.0) {
            return bad("margin must be non-negative and bridge factor positive");
        }
        if !(self.flag_threshold > 0.0 && self.flag_threshold < 1.0) {
            return bad("flag threshold must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Roadmap {
    pub nodes: Vec<LatentPoint>,
    pub adjacency: Adjacency,
    pub params: BuildParams,
    pub model_hash: String,
    pub dataset_hash: String,
    pub config_hash: String,
    tree: KdTree,
}

impl PartialEq for Roadmap {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.adjacency == other.adjacency
            && self.params == other.params
            && self.model_hash == other.model_hash
            && self.dataset_hash == other.dataset_hash
            && self.config_hash == other.config_hash
    }
}

impl Roadmap {
    pub fn from_parts(nodes: Vec<LatentPoint>, adjacency: Adjacency, params: BuildParams) -> Self {
        let coords: Vec<[f64; 2]> = nodes.iter().map(|n| n.coords).collect();
        Roadmap {
            tree: KdTree::new(&coords),
            nodes,
            adjacency,
            params,
            model_hash: String::new(),
            dataset_hash: String::new(),
            config_hash: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|a| a.len()).sum::<usize>() / 2
    }

    /// Edges with `u < v`, in index order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (u, nb) in self.adjacency.iter().enumerate() {
            for (&v, &w) in nb.range(u + 1..) {
                out.push((u, v, w));
            }
        }
        out
    }

    pub fn median_edge_length(&self) -> f64 {
        let w: Vec<f64> = self.edges().iter().map(|e| e.2).collect();
        median(&w).unwrap_or(0.0)
    }

    pub fn latent_distance(&self, u: usize, v: usize) -> f64 {
        let (a, b) = (self.nodes[u].coords, self.nodes[v].coords);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Checks symmetry, positive weights, no self-loops and safe labels.
    pub fn check_invariants(&self) -> Result<(), RoadmapError> {
        if self.adjacency.len() != self.nodes.len() {
            return Err(RoadmapError::Invariant("adjacency size differs from node count".into()));
        }
        for (u, nb) in self.adjacency.iter().enumerate() {
            if self.nodes[u].label != Label::Safe {
                return Err(RoadmapError::NotSafe(u));
            }
            for (&v, &w) in nb {
                if v == u {
                    return Err(RoadmapError::Invariant(format!("self-loop at {u}")));
                }
                if !(w > 0.0 && w.is_finite()) {
                    return Err(RoadmapError::Invariant(format!("edge {u}-{v} has weight {w}")));
                }
                if self.adjacency.get(v).and_then(|m| m.get(&u)) != Some(&w) {
                    return Err(RoadmapError::Invariant(format!("edge {u}-{v} is not symmetric")));
                }
            }
        }
        Ok(())
    }

    fn check_node(&self, i: usize) -> Result<(), RoadmapError> {
        if i < self.nodes.len() {
            Ok(())
        } else {
            Err(RoadmapError::UnknownNode(i))
        }
    }

    /// Minimum-weight path; empty when the goal is unreachable.
    pub fn shortest_path(&self, start: usize, goal: usize) -> Result<Vec<usize>, RoadmapError> {
        self.check_node(start)?;
        self.check_node(goal)?;
        Ok(graph::dijkstra(&self.adjacency, start, goal, &|_| true)
            .map(|r| r.1)
            .unwrap_or_default())
    }

    /// Shortest path through nodes accepted by `allowed`; the base graph is
    /// never modified.
    pub fn shortest_path_masked(
        &self,
        start: usize,
        goal: usize,
        allowed: &dyn Fn(usize) -> bool,
    ) -> Result<Option<(f64, Vec<usize>)>, RoadmapError> {
        self.shortest_path_filtered(start, goal, allowed, &|_, _| true)
    }

    /// Masked search that also skips edges rejected by `edge_ok`.
    pub fn shortest_path_filtered(
        &self,
        start: usize,
        goal: usize,
        allowed: &dyn Fn(usize) -> bool,
        edge_ok: &dyn Fn(usize, usize) -> bool,
    ) -> Result<Option<(f64, Vec<usize>)>, RoadmapError> {
        self.check_node(start)?;
        self.check_node(goal)?;
        Ok(graph::dijkstra_filtered(&self.adjacency, start, goal, allowed, edge_ok))
    }

    pub fn path_weight(&self, path: &[usize]) -> Option<f64> {
        path.windows(2)
            .map(|p| self.adjacency[p[0]].get(&p[1]).copied())
            .sum()
    }

    /// Node with minimal latent distance to `z` (lower index on ties).
    pub fn nearest_node(&self, z: &[f64; 2]) -> Option<usize> {
        self.tree.nearest(z)
    }

    /// Like [`Roadmap::nearest_node`] but restricted to accepted nodes.
    pub fn nearest_node_where(&self, z: &[f64; 2], accept: &dyn Fn(usize) -> bool) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n.coords[0] - z[0]).powi(2) + (n.coords[1] - z[1]).powi(2);
            if best.is_none_or(|b| d < b.0) && accept(i) {
                best = Some((d, i));
            }
        }
        best.map(|b| b.1)
    }

    /// Nodes within latent distance `r` of `z`, ascending by index.
    pub fn nodes_within(&self, z: &[f64; 2], r: f64) -> Vec<usize> {
        self.tree.within(z, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn point(x: f64, y: f64) -> LatentPoint {
        LatentPoint {
            coords: [x, y],
            label: Label::Safe,
            origin: Origin::Dataset,
            flag_score: 0.0,
            decoded_joints: JointVector::zeros(),
        }
    }

    #[test]
    fn unknown_node_is_an_error() {
        let r = build_knn(vec![point(0.0, 0.0), point(1.0, 0.0)], 1).unwrap();
        assert!(matches!(r.shortest_path(0, 5), Err(RoadmapError::UnknownNode(5))));
        assert_eq!(r.shortest_path(1, 1).unwrap(), vec![1]);
    }

    #[test]
    fn nearest_node_ties_and_masks() {
        let r = build_knn(vec![point(1.0, 0.0), point(-1.0, 0.0), point(3.0, 0.0)], 1).unwrap();
        assert_eq!(r.nearest_node(&[0.0, 0.0]), Some(0));
        assert_eq!(r.nearest_node(&[-1.0, 0.0]), Some(1));
        assert_eq!(r.nearest_node_where(&[0.0, 0.0], &|i| i != 0), Some(1));
        assert_eq!(r.nearest_node_where(&[0.0, 0.0], &|_| false), None);
    }

    #[test]
    fn invariant_check_catches_asymmetry() {
        let mut r = build_knn(vec![point(0.0, 0.0), point(1.0, 0.0)], 1).unwrap();
        assert!(r.check_invariants().is_ok());
        r.adjacency[0].insert(1, 2.0);
        assert!(r.check_invariants().is_err());
    }
}
