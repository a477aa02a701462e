use std::collections::BTreeSet;

use nalgebra::Vector3;
use ndarray::{Array2, Axis};

use super::graph::{adjacency_from_edges, components};
use super::kdtree::KdTree;
use super::{BuildParams, Label, LatentPoint, Origin, Roadmap, RoadmapError};
use crate::collision::{is_collision, ConvexShape};
use crate::dataset::{Dataset, FIELDS, FLAG_INDEX, POINT_OBSTACLE_RADIUS};
use crate::robot::{JointVector, RobotModel, DOF};
use crate::vae::VaeModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl LatentBounds {
    /// Bounding box of `points` grown by `margin` times its extent per axis.
    pub fn around(points: &[[f64; 2]], margin: f64) -> Option<Self> {
        let first = points.first()?;
        let (mut min, mut max) = (*first, *first);
        for p in points {
            for a in 0..2 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        for a in 0..2 {
            let pad = ((max[a] - min[a]) * margin).max(1e-6);
            min[a] -= pad;
            max[a] += pad;
        }
        Some(LatentBounds { min, max })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub safe: Vec<LatentPoint>,
    pub evaluated: usize,
    /// Points whose decoded joints left the limits and were clamped.
    pub clamped: usize,
    /// Share of grid points whose decoded flag agrees with a direct
    /// collision check of the decoded joints against the decoded obstacle.
    pub label_agreement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectReport {
    pub components_before: usize,
    /// Bridging edges added, in final node indices.
    pub bridges: Vec<(usize, usize, f64)>,
    pub dropped_components: usize,
    pub dropped_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildReport {
    pub bounds: LatentBounds,
    pub dataset_nodes: usize,
    pub grid: Option<GridResult>,
    pub duplicates_removed: usize,
    pub bridge_cap: f64,
    pub connect: ConnectReport,
    pub nodes: usize,
    pub edges: usize,
    pub median_edge: f64,
}

fn decode_points(
    model: &VaeModel,
    robot: &RobotModel,
    z: &Array2<f64>,
) -> Result<Vec<([f64; FIELDS], JointVector, usize)>, RoadmapError> {
    let mut out = Vec::with_capacity(z.nrows());
    for chunk in z.axis_chunks_iter(Axis(0), 2048) {
        let y = model.decode_batch(chunk)?;
        for row in y.outer_iter() {
            let mut v = [0.0; FIELDS];
            v.iter_mut().zip(row.iter()).for_each(|(a, b)| *a = *b);
            let raw = model.normalization.denormalize(&v);
            let mut q = [0.0; DOF];
            q.copy_from_slice(&raw[..DOF]);
            let (q, moved) = robot.clamp(&JointVector(q));
            out.push((raw, q, moved));
        }
    }
    Ok(out)
}

/// Latent means of the safe samples, with decoded joints.
pub fn encode_safe_samples(
    model: &VaeModel,
    robot: &RobotModel,
    d: &Dataset,
) -> Result<Vec<LatentPoint>, RoadmapError> {
    let safe: Vec<_> = d.samples.iter().filter(|s| !s.collision).collect();
    let mut x = Array2::zeros((safe.len(), FIELDS));
    for (mut r, s) in x.axis_iter_mut(Axis(0)).zip(safe.iter()) {
        let v = model.normalization.normalize(&s.to_row());
        r.iter_mut().zip(v.iter()).for_each(|(a, b)| *a = *b);
    }
    let (mu, _) = model.encode_batch(x.view())?;
    let decoded = decode_points(model, robot, &mu)?;
    let clamped = decoded.iter().filter(|d| d.2 > 0).count();
    if clamped > 0 {
        log::warn!("{clamped} decoded dataset poses clamped to joint limits");
    }
    Ok(mu
        .outer_iter()
        .zip(decoded)
        .map(|(z, (raw, q, _))| LatentPoint {
            coords: [z[0], z[1]],
            label: Label::Safe,
            origin: Origin::Dataset,
            flag_score: raw[FLAG_INDEX],
            decoded_joints: q,
        })
        .collect())
}

/// Decodes a `resolution x resolution` mesh and stamps each point with the
/// decoder's flag. A point whose joints needed clamping is also marked
/// colliding if the clamped pose touches the decoded obstacle.
pub fn densify_grid(
    model: &VaeModel,
    robot: &RobotModel,
    bounds: &LatentBounds,
    resolution: usize,
    flag_threshold: f64,
) -> Result<GridResult, RoadmapError> {
    if resolution < 2 {
        return Err(RoadmapError::InvalidParams("grid resolution must be at least 2".into()));
    }
    let step = |a: usize, i: usize| {
        bounds.min[a] + (bounds.max[a] - bounds.min[a]) * i as f64 / (resolution - 1) as f64
    };
    let z = Array2::from_shape_fn((resolution * resolution, 2), |(r, c)| {
        let (ix, iy) = (r % resolution, r / resolution);
        if c == 0 {
            step(0, ix)
        } else {
            step(1, iy)
        }
    });
    let decoded = decode_points(model, robot, &z)?;
    let mut safe = Vec::new();
    let mut clamped = 0;
    let mut agree = 0;
    for (i, (raw, q, moved)) in decoded.into_iter().enumerate() {
        let score = raw[FLAG_INDEX];
        let obstacle = ConvexShape::sphere(Vector3::new(raw[14], raw[15], raw[16]), POINT_OBSTACLE_RADIUS)?;
        let truth = is_collision(robot, &q, &obstacle, 0.0)?;
        let stamped = score >= flag_threshold;
        if stamped == truth {
            agree += 1;
        }
        if moved > 0 {
            clamped += 1;
        }
        if stamped || (moved > 0 && truth) {
            continue;
        }
        safe.push(LatentPoint {
            coords: [z[[i, 0]], z[[i, 1]]],
            label: Label::Safe,
            origin: Origin::Grid,
            flag_score: score,
            decoded_joints: q,
        });
    }
    if clamped > 0 {
        log::warn!("{clamped} decoded grid poses clamped to joint limits");
    }
    let evaluated = resolution * resolution;
    Ok(GridResult {
        safe,
        evaluated,
        clamped,
        label_agreement: agree as f64 / evaluated as f64,
    })
}

/// Joins every point to its `k` nearest latent neighbours (union
/// symmetrized, ties by index). Coincident points get no edge between
/// them, keeping weights strictly positive.
pub fn build_knn(points: Vec<LatentPoint>, k: usize) -> Result<Roadmap, RoadmapError> {
    if k == 0 {
        return Err(RoadmapError::InvalidParams("k must be at least 1".into()));
    }
    if points.len() < k + 1 {
        return Err(RoadmapError::InvalidParams(format!(
            "need at least {} points for k = {k}, got {}",
            k + 1,
            points.len()
        )));
    }
    if let Some(i) = points.iter().position(|p| p.label != Label::Safe) {
        return Err(RoadmapError::NotSafe(i));
    }
    let coords: Vec<[f64; 2]> = points.iter().map(|p| p.coords).collect();
    let tree = KdTree::new(&coords);
    let mut edges = Vec::with_capacity(points.len() * k);
    for (i, c) in coords.iter().enumerate() {
        for (j, d2) in tree.knn(c, k, Some(i)) {
            edges.push((i, j, d2.sqrt()));
        }
    }
    let adjacency = adjacency_from_edges(points.len(), &edges);
    let params = BuildParams {
        k,
        ..BuildParams::default()
    };
    Ok(Roadmap::from_parts(points, adjacency, params))
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = x;
    while parent[c] != r {
        let n = parent[c];
        parent[c] = r;
        c = n;
    }
    r
}

/// Bridges components to the largest one with the shortest edges no
/// longer than `cap` (Kruskal over cross-component candidates) and drops
/// whatever stays disconnected.
pub fn ensure_connected(r: Roadmap, cap: f64) -> (Roadmap, ConnectReport) {
    let n = r.len();
    let label = components(&r.adjacency);
    let distinct: BTreeSet<usize> = label.iter().copied().collect();
    if distinct.len() <= 1 {
        return (
            r,
            ConnectReport {
                components_before: distinct.len(),
                bridges: Vec::new(),
                dropped_components: 0,
                dropped_nodes: 0,
            },
        );
    }
    let mut size = vec![0usize; n];
    for &l in &label {
        size[l] += 1;
    }
    // largest component, lowest label on ties
    let main = distinct
        .iter()
        .copied()
        .max_by(|&a, &b| size[a].cmp(&size[b]).then(b.cmp(&a)))
        .unwrap();
    let mut candidates = Vec::new();
    if cap > 0.0 {
        for u in 0..n {
            for v in r.nodes_within(&r.nodes[u].coords, cap) {
                if v > u && label[u] != label[v] {
                    let w = r.latent_distance(u, v);
                    if w > 0.0 {
                        candidates.push((w, u, v));
                    }
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut parent: Vec<usize> = (0..n).collect();
    let mut bridges = Vec::new();
    for (w, u, v) in candidates {
        let (a, b) = (find(&mut parent, label[u]), find(&mut parent, label[v]));
        if a != b {
            parent[a] = b;
            bridges.push((u, v, w));
        }
    }
    let main_root = find(&mut parent, main);
    let keep: Vec<bool> = (0..n).map(|i| find(&mut parent, label[i]) == main_root).collect();
    let mut new_index = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    for i in 0..n {
        if keep[i] {
            new_index[i] = nodes.len();
            nodes.push(r.nodes[i]);
        }
    }
    let mut edges: Vec<(usize, usize, f64)> = r
        .edges()
        .into_iter()
        .filter(|e| keep[e.0])
        .map(|(u, v, w)| (new_index[u], new_index[v], w))
        .collect();
    let bridges: Vec<(usize, usize, f64)> = bridges
        .into_iter()
        .filter(|e| keep[e.0])
        .map(|(u, v, w)| (new_index[u], new_index[v], w))
        .collect();
    edges.extend(bridges.iter().copied());
    let dropped_roots: BTreeSet<usize> = distinct
        .iter()
        .filter(|&&l| !keep[l])
        .copied()
        .collect();
    let report = ConnectReport {
        components_before: distinct.len(),
        bridges,
        dropped_components: dropped_roots.len(),
        dropped_nodes: n - nodes.len(),
    };
    let adjacency = adjacency_from_edges(nodes.len(), &edges);
    let mut out = Roadmap::from_parts(nodes, adjacency, r.params);
    out.model_hash = r.model_hash;
    out.dataset_hash = r.dataset_hash;
    out.config_hash = r.config_hash;
    (out, report)
}

/// Full construction: encoded safe samples plus safe grid points, k-NN
/// edges, then connectivity repair.
pub fn build_roadmap(
    model: &VaeModel,
    robot: &RobotModel,
    d: &Dataset,
    params: &BuildParams,
) -> Result<(Roadmap, BuildReport), RoadmapError> {
    params.validate()?;
    let mut all = Array2::zeros((d.len(), FIELDS));
    for (mut r, s) in all.axis_iter_mut(Axis(0)).zip(d.samples.iter()) {
        let v = model.normalization.normalize(&s.to_row());
        r.iter_mut().zip(v.iter()).for_each(|(a, b)| *a = *b);
    }
    let (mu, _) = model.encode_batch(all.view())?;
    let cloud: Vec<[f64; 2]> = mu.outer_iter().map(|z| [z[0], z[1]]).collect();
    let bounds = LatentBounds::around(&cloud, params.margin)
        .ok_or_else(|| RoadmapError::InvalidParams("empty dataset".into()))?;
    let mut points = encode_safe_samples(model, robot, d)?;
    let dataset_nodes = points.len();
    let grid = if params.grid_resolution >= 2 {
        let g = densify_grid(model, robot, &bounds, params.grid_resolution, params.flag_threshold)?;
        points.extend(g.safe.iter().copied());
        Some(g)
    } else {
        None
    };
    let before = points.len();
    let mut seen = BTreeSet::new();
    points.retain(|p| seen.insert((p.coords[0].to_bits(), p.coords[1].to_bits())));
    let duplicates_removed = before - points.len();
    let mut r = build_knn(points, params.k)?;
    r.params = *params;
    let bridge_cap = params.bridge_factor * r.median_edge_length();
    let (r, connect) = ensure_connected(r, bridge_cap);
    r.check_invariants()?;
    let report = BuildReport {
        bounds,
        dataset_nodes,
        grid,
        duplicates_removed,
        bridge_cap,
        nodes: r.len(),
        edges: r.edge_count(),
        median_edge: r.median_edge_length(),
        connect,
    };
    Ok((r, report))
}
