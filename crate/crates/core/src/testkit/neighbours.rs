//! Textbook trustworthiness and silhouette from full rank tables.

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `rank[i][j]`: position of `j` in `i`'s distance-sorted list (1-based,
/// ties by index), 0 on the diagonal.
pub fn rank_table(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| {
                dist(&points[i], &points[a])
                    .total_cmp(&dist(&points[i], &points[b]))
                    .then(a.cmp(&b))
            });
            let mut r = vec![0; n];
            for (pos, &j) in order.iter().enumerate() {
                r[j] = pos + 1;
            }
            r
        })
        .collect()
}

/// Standard formula, valid for `k < n / 2`.
pub fn trustworthiness(high: &[Vec<f64>], low: &[Vec<f64>], k: usize) -> f64 {
    let n = high.len();
    let rh = rank_table(high);
    let rl = rank_table(low);
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if j != i && rl[i][j] <= k && rh[i][j] > k {
                sum += (rh[i][j] - k) as f64;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * sum
}

pub fn silhouette(points: &[Vec<f64>], labels: &[bool]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let same: Vec<f64> = (0..n)
            .filter(|&j| j != i && labels[j] == labels[i])
            .map(|j| dist(&points[i], &points[j]))
            .collect();
        let other: Vec<f64> = (0..n)
            .filter(|&j| labels[j] != labels[i])
            .map(|j| dist(&points[i], &points[j]))
            .collect();
        if same.is_empty() || other.is_empty() {
            continue;
        }
        let a = same.iter().sum::<f64>() / same.len() as f64;
        let b = other.iter().sum::<f64>() / other.len() as f64;
        total += (b - a) / a.max(b);
    }
    total / n as f64
}
