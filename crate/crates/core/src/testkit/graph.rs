//! Slow, obviously-correct graph routines over undirected edge lists.

/// Cheapest simple path by exhaustive DFS. `None` if unreachable.
pub fn enumerate_shortest(
    n: usize,
    edges: &[(usize, usize, f64)],
    start: usize,
    goal: usize,
) -> Option<(f64, Vec<usize>)> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v, w) in edges {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut path = vec![start];
    let mut seen = vec![false; n];
    seen[start] = true;
    fn dfs(
        adj: &[Vec<(usize, f64)>],
        goal: usize,
        cost: f64,
        path: &mut Vec<usize>,
        seen: &mut [bool],
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        let here = *path.last().unwrap();
        if here == goal {
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                *best = Some((cost, path.clone()));
            }
            return;
        }
        for &(v, w) in &adj[here] {
            if !seen[v] {
                seen[v] = true;
                path.push(v);
                dfs(adj, goal, cost + w, path, seen, best);
                path.pop();
                seen[v] = false;
            }
        }
    }
    dfs(&adj, goal, 0.0, &mut path, &mut seen, &mut best);
    best
}

/// Single-source distances by Bellman-Ford relaxation.
pub fn bellman_ford(n: usize, edges: &[(usize, usize, f64)], start: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    dist[start] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for &(u, v, w) in edges {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                changed = true;
            }
            if dist[v] + w < dist[u] {
                dist[u] = dist[v] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

/// Number of connected components via union-find.
pub fn component_count(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    let mut count = n;
    for &(u, v) in edges {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a != b {
            parent[a] = b;
            count -= 1;
        }
    }
    count
}
