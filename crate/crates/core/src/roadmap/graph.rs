//! Undirected weighted adjacency and Dijkstra.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

/// Per-node map from neighbour index to edge weight.
pub type Adjacency = Vec<BTreeMap<usize, f64>>;

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Builds a symmetric adjacency from an edge list, keeping the lighter of
/// duplicate edges. Self-loops and non-positive weights are skipped.
pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Adjacency {
    let mut adj = vec![BTreeMap::new(); n];
    for &(u, v, w) in edges {
        if u == v || !(w > 0.0) {
            continue;
        }
        for (a, b) in [(u, v), (v, u)] {
            let e = adj[a].entry(b).or_insert(w);
            if w < *e {
                *e = w;
            }
        }
    }
    adj
}

/// Distances and predecessors from `start`, visiting only nodes for which
/// `allowed` holds and edges for which `edge_ok` holds. Among equal-cost
/// routes the predecessor with the lower index wins.
pub fn dijkstra_tree(
    adj: &Adjacency,
    start: usize,
    allowed: &dyn Fn(usize) -> bool,
    edge_ok: &dyn Fn(usize, usize) -> bool,
    stop_at: Option<usize>,
) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut done = vec![false; n];
    if !allowed(start) {
        return (dist, pred);
    }
    dist[start] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Entry(0.0, start)));
    while let Some(Reverse(Entry(d, u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if Some(u) == stop_at {
            break;
        }
        for (&v, &w) in &adj[u] {
            if done[v] || !allowed(v) || !edge_ok(u, v) {
                continue;
            }
            let nd = d + w;
            let better = nd < dist[v] || (nd == dist[v] && pred[v].is_some_and(|p| u < p));
            if better {
                dist[v] = nd;
                pred[v] = Some(u);
                heap.push(Reverse(Entry(nd, v)));
            }
        }
    }
    (dist, pred)
}

/// Cheapest path `start -> goal` over allowed nodes with its cost.
pub fn dijkstra(
    adj: &Adjacency,
    start: usize,
    goal: usize,
    allowed: &dyn Fn(usize) -> bool,
) -> Option<(f64, Vec<usize>)> {
    dijkstra_filtered(adj, start, goal, allowed, &|_, _| true)
}

/// [`dijkstra`] that also skips edges rejected by `edge_ok(from, to)`.
pub fn dijkstra_filtered(
    adj: &Adjacency,
    start: usize,
    goal: usize,
    allowed: &dyn Fn(usize) -> bool,
    edge_ok: &dyn Fn(usize, usize) -> bool,
) -> Option<(f64, Vec<usize>)> {
    if !allowed(goal) {
        return None;
    }
    let (dist, pred) = dijkstra_tree(adj, start, allowed, edge_ok, Some(goal));
    if !dist[goal].is_finite() {
        return None;
    }
    let mut path = vec![goal];
    let mut cur = goal;
    while let Some(p) = pred[cur] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    Some((dist[goal], path))
}

/// Connected components as a label per node (labels are the smallest
/// member index).
pub fn components(adj: &Adjacency) -> Vec<usize> {
    let n = adj.len();
    let mut label = vec![usize::MAX; n];
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = s;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &v in adj[u].keys() {
                if label[v] == usize::MAX {
                    label[v] = s;
                    stack.push(v);
                }
            }
        }
    }
    label
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_equals_goal() {
        let adj = adjacency_from_edges(3, &[(0, 1, 1.0)]);
        assert_eq!(dijkstra(&adj, 1, 1, &|_| true), Some((0.0, vec![1])));
    }

    #[test]
    fn unreachable_goal() {
        let adj = adjacency_from_edges(3, &[(0, 1, 1.0)]);
        assert_eq!(dijkstra(&adj, 0, 2, &|_| true), None);
    }

    #[test]
    fn handcrafted_five_nodes() {
        // 0-1-4 costs 2+5, 0-2-3-4 costs 1+1+1
        let adj = adjacency_from_edges(
            5,
            &[(0, 1, 2.0), (1, 4, 5.0), (0, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (1, 3, 0.5)],
        );
        assert_eq!(dijkstra(&adj, 0, 4, &|_| true), Some((3.0, vec![0, 2, 3, 4])));
        assert_eq!(dijkstra(&adj, 0, 4, &|v| v != 2), Some((3.5, vec![0, 1, 3, 4])));
        let no_34 = |u: usize, v: usize| (u.min(v), u.max(v)) != (3, 4);
        assert_eq!(dijkstra_filtered(&adj, 0, 4, &|_| true, &no_34), Some((7.0, vec![0, 1, 4])));
    }

    #[test]
    fn equal_cost_routes_prefer_lower_predecessor() {
        let adj = adjacency_from_edges(4, &[(0, 2, 1.0), (0, 1, 1.0), (1, 3, 1.0), (2, 3, 1.0)]);
        assert_eq!(dijkstra(&adj, 0, 3, &|_| true).unwrap().1, vec![0, 1, 3]);
    }

    #[test]
    fn symmetric_construction_skips_bad_edges() {
        let adj = adjacency_from_edges(3, &[(0, 0, 1.0), (0, 1, -1.0), (1, 2, 2.0), (2, 1, 1.5)]);
        assert!(adj[0].is_empty());
        assert_eq!(adj[1][&2], 1.5);
        assert_eq!(adj[2][&1], 1.5);
        assert_eq!(components(&adj), vec![0, 1, 1]);
    }
}
