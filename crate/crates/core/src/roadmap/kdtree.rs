//! Static 2D kd-tree. All queries order candidates by `(distance, index)`
//! so results are independent of tree shape.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 2]>,
    /// Point indices in tree order; node `i` of the implicit tree covers
    /// `order[lo..hi]` with its splitting point at the middle.
    order: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

fn d2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

impl KdTree {
    pub fn new(points: &[[f64; 2]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        fn build(points: &[[f64; 2]], idx: &mut [usize], depth: usize) {
            if idx.len() <= 1 {
                return;
            }
            let axis = depth % 2;
            let mid = idx.len() / 2;
            idx.select_nth_unstable_by(mid, |&a, &b| {
                points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
            });
            let (left, right) = idx.split_at_mut(mid);
            build(points, left, depth + 1);
            build(points, &mut right[1..], depth + 1);
        }
        build(points, &mut order, 0);
        KdTree {
            points: points.to_vec(),
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn search(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        q: &[f64; 2],
        visit: &mut impl FnMut(usize, f64),
        bound: &impl Fn() -> f64,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = self.order[mid];
        visit(p, d2(&self.points[p], q));
        let axis = depth % 2;
        let diff = q[axis] - self.points[p][axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, depth + 1, q, visit, bound);
        if diff * diff <= bound() {
            self.search(far.0, far.1, depth + 1, q, visit, bound);
        }
    }

    /// The `k` nearest points to `q` (squared distances), skipping
    /// `exclude`, sorted by `(distance, index)`.
    pub fn knn(&self, q: &[f64; 2], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let heap = std::cell::RefCell::new(BinaryHeap::<Cand>::with_capacity(k + 1));
        let bound = || {
            let h = heap.borrow();
            if h.len() < k {
                f64::INFINITY
            } else {
                h.peek().unwrap().0
            }
        };
        let mut visit = |i: usize, d: f64| {
            if Some(i) == exclude {
                return;
            }
            let mut h = heap.borrow_mut();
            let c = Cand(d, i);
            if h.len() < k {
                h.push(c);
            } else if c < *h.peek().unwrap() {
                h.pop();
                h.push(c);
            }
        };
        self.search(0, self.points.len(), 0, q, &mut visit, &bound);
        let mut out: Vec<Cand> = heap.into_inner().into_vec();
        out.sort();
        out.into_iter().map(|c| (c.1, c.0)).collect()
    }

    /// Nearest point, lowest index among equidistant ones.
    pub fn nearest(&self, q: &[f64; 2]) -> Option<usize> {
        self.knn(q, 1, None).first().map(|c| c.0)
    }

    /// All points within Euclidean distance `r` of `q`, sorted by index.
    pub fn within(&self, q: &[f64; 2], r: f64) -> Vec<usize> {
        let r2 = r * r;
        let mut out = Vec::new();
        let mut visit = |i: usize, d: f64| {
            if d <= r2 {
                out.push(i);
            }
        };
        self.search(0, self.points.len(), 0, q, &mut visit, &|| r2);
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_knn(pts: &[[f64; 2]], q: &[f64; 2], k: usize, ex: Option<usize>) -> Vec<usize> {
        let mut c: Vec<(f64, usize)> = (0..pts.len())
            .filter(|&i| Some(i) != ex)
            .map(|i| (d2(&pts[i], q), i))
            .collect();
        c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        c.into_iter().take(k).map(|x| x.1).collect()
    }

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // coarse grid coordinates force many exact ties
        let pts: Vec<[f64; 2]> = (0..500)
            .map(|_| [rng.random_range(0..20) as f64 * 0.1, rng.random_range(0..20) as f64 * 0.1])
            .collect();
        let tree = KdTree::new(&pts);
        for i in 0..pts.len() {
            let got: Vec<usize> = tree.knn(&pts[i], 8, Some(i)).iter().map(|c| c.0).collect();
            assert_eq!(got, brute_knn(&pts, &pts[i], 8, Some(i)));
        }
        for _ in 0..200 {
            let q = [rng.random_range(-0.5..2.5), rng.random_range(-0.5..2.5)];
            assert_eq!(tree.nearest(&q), brute_knn(&pts, &q, 1, None).first().copied());
            let r = rng.random_range(0.0..0.5);
            let within: Vec<usize> = (0..pts.len()).filter(|&i| d2(&pts[i], &q) <= r * r).collect();
            assert_eq!(tree.within(&q, r), within);
        }
    }

    #[test]
    fn equidistant_nearest_prefers_lower_index() {
        let tree = KdTree::new(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(tree.nearest(&[0.0, 0.0]), Some(0));
    }

    #[test]
    fn empty_and_oversized_queries() {
        let tree = KdTree::new(&[]);
        assert_eq!(tree.nearest(&[0.0, 0.0]), None);
        let t2 = KdTree::new(&[[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(t2.knn(&[0.0, 0.0], 5, None).len(), 2);
    }
}
