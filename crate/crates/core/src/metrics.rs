//! Embedding quality: neighbourhood preservation, class separation and
//! distance rank correlation.
//!
//! Ranks break distance ties by point index, so every statistic is a
//! deterministic function of its inputs.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{Dataset, FLAG_INDEX};
use crate::vae::{VaeError, VaeModel};

pub const DEFAULT_K: usize = 12;
/// Point pairs sampled for the rank correlation.
pub const SPEARMAN_PAIRS: usize = 20_000;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("point sets differ in size ({high} vs {low})")]
    Mismatch { high: usize, low: usize },
    #[error("neighbourhood size {k} must be in 1..{n}")]
    BadK { k: usize, n: usize },
    #[error("bin size {size} exceeds the {available} available samples")]
    BinTooLarge { size: usize, available: usize },
    #[error(transparent)]
    Vae(#[from] VaeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingReport {
    pub subsample_size: usize,
    pub k: usize,
    pub trustworthiness: f64,
    pub continuity: f64,
    pub silhouette: f64,
    pub spearman: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-major copy with a row accessor.
struct Rows {
    data: Vec<f64>,
    dims: usize,
}

impl Rows {
    fn new(p: ArrayView2<f64>) -> Self {
        Rows {
            data: p.iter().copied().collect(),
            dims: p.ncols(),
        }
    }

    fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }
}

/// Largest possible sum of `(rank - k)` over one point's intruders.
fn max_penalty(n: usize, k: usize) -> f64 {
    let g = k.min(n - 1 - k);
    (1..=g).map(|m| (n - m - k) as f64).sum()
}

/// Neighbourhood intrusion statistic: penalises points that are among the
/// `k` nearest in `b` but not in `a`, by their rank in `a`.
fn intrusion(a: ArrayView2<f64>, b: ArrayView2<f64>, k: usize) -> Result<f64, MetricsError> {
    let n = a.nrows();
    if n != b.nrows() {
        return Err(MetricsError::Mismatch { high: n, low: b.nrows() });
    }
    if k == 0 || k >= n {
        return Err(MetricsError::BadK { k, n });
    }
    let (av, bv) = (Rows::new(a), Rows::new(b));
    let g = max_penalty(n, k);
    if g == 0.0 {
        return Ok(1.0);
    }
    let key = |d: f64, j: usize| (d, j);
    let less = |x: (f64, usize), y: (f64, usize)| x.0 < y.0 || (x.0 == y.0 && x.1 < y.1);
    let mut da = vec![0.0; n];
    let mut db: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    let mut total = 0.0;
    for i in 0..n {
        let ai = av.get(i);
        let bi = bv.get(i);
        db.clear();
        for j in 0..n {
            da[j] = sq_dist(ai, av.get(j));
            if j != i {
                db.push((sq_dist(bi, bv.get(j)), j));
            }
        }
        // k nearest in b
        db.select_nth_unstable_by(k - 1, |x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        // the k-th nearest in a bounds the a-neighbourhood
        let mut ka: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (da[j], j)).collect();
        ka.select_nth_unstable_by(k - 1, |x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let kth = ka[k - 1];
        let mut intruders: Vec<(f64, usize)> = db[..k]
            .iter()
            .map(|&(_, j)| key(da[j], j))
            .filter(|&kj| less(kth, kj))
            .collect();
        if intruders.is_empty() {
            continue;
        }
        intruders.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        // below[m]: points strictly closer than intruder m but not closer
        // than intruder m - 1
        let mut below = vec![0usize; intruders.len()];
        for l in (0..n).filter(|&l| l != i) {
            let kl = key(da[l], l);
            let m = intruders.partition_point(|&x| !less(kl, x));
            if m < intruders.len() {
                below[m] += 1;
            }
        }
        let mut closer = 0;
        for c in below {
            closer += c;
            total += (closer + 1 - k) as f64;
        }
    }
    Ok(1.0 - total / (n as f64 * g))
}

/// Trustworthiness at neighbourhood size `k`, in `[0, 1]`. When no point
/// can intrude (`k >= (n - 1) / 2` leaves no room for a penalty, e.g.
/// `k = n - 1`) the value is 1 by convention.
pub fn trustworthiness(high: ArrayView2<f64>, low: ArrayView2<f64>, k: usize) -> Result<f64, MetricsError> {
    intrusion(high, low, k)
}

/// Continuity: trustworthiness with the roles of the spaces swapped.
pub fn continuity(high: ArrayView2<f64>, low: ArrayView2<f64>, k: usize) -> Result<f64, MetricsError> {
    if high.nrows() != low.nrows() {
        return Err(MetricsError::Mismatch {
            high: high.nrows(),
            low: low.nrows(),
        });
    }
    intrusion(low, high, k)
}

/// Mean silhouette over two classes; 0 when a class is empty.
pub fn silhouette(points: ArrayView2<f64>, labels: &[bool]) -> f64 {
    let n = points.nrows();
    assert_eq!(n, labels.len());
    let counts = [
        labels.iter().filter(|l| !**l).count(),
        labels.iter().filter(|l| **l).count(),
    ];
    if counts[0] == 0 || counts[1] == 0 {
        return 0.0;
    }
    let pv = Rows::new(points);
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = [0.0, 0.0];
        let pi = pv.get(i);
        for j in 0..n {
            if j != i {
                sums[labels[j] as usize] += sq_dist(pi, pv.get(j)).sqrt();
            }
        }
        let own = labels[i] as usize;
        if counts[own] == 1 {
            continue;
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let b = sums[1 - own] / counts[1 - own] as f64;
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Average ranks (1-based), ties sharing the mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut s = 0;
    while s < idx.len() {
        let mut e = s;
        while e + 1 < idx.len() && values[idx[e + 1]] == values[idx[s]] {
            e += 1;
        }
        let r = (s + e) as f64 / 2.0 + 1.0;
        for &i in &idx[s..=e] {
            out[i] = r;
        }
        s = e + 1;
    }
    out
}

/// Spearman correlation of two equal-length samples.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(ry.iter()) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Rank correlation between high- and low-space distances over `pairs`
/// seeded random point pairs (all pairs when there are fewer).
pub fn distance_rank_correlation(high: ArrayView2<f64>, low: ArrayView2<f64>, pairs: usize, seed: u64) -> f64 {
    let n = high.nrows();
    let all = n * (n - 1) / 2;
    let chosen: Vec<(usize, usize)> = if all <= pairs {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..pairs)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            })
            .collect()
    };
    let dist = |p: &ArrayView2<f64>, i: usize, j: usize| {
        p.row(i)
            .iter()
            .zip(p.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let dh: Vec<f64> = chosen.iter().map(|&(i, j)| dist(&high, i, j)).collect();
    let dl: Vec<f64> = chosen.iter().map(|&(i, j)| dist(&low, i, j)).collect();
    spearman(&dh, &dl)
}

/// All four statistics for one point set.
pub fn embedding_report(
    high: ArrayView2<f64>,
    low: ArrayView2<f64>,
    labels: &[bool],
    k: usize,
    seed: u64,
) -> Result<EmbeddingReport, MetricsError> {
    Ok(EmbeddingReport {
        subsample_size: high.nrows(),
        k,
        trustworthiness: trustworthiness(high, low, k)?,
        continuity: continuity(high, low, k)?,
        silhouette: silhouette(low, labels),
        spearman: distance_rank_correlation(high, low, SPEARMAN_PAIRS, seed),
    })
}

/// Normalized non-flag fields, latent means and labels for a dataset.
pub fn embed(d: &Dataset, m: &VaeModel) -> Result<(Array2<f64>, Array2<f64>, Vec<bool>), MetricsError> {
    let n = d.len();
    let mut full = Array2::zeros((n, FLAG_INDEX + 1));
    for (mut r, s) in full.axis_iter_mut(Axis(0)).zip(d.samples.iter()) {
        let v = m.normalization.normalize(&s.to_row());
        r.iter_mut().zip(v.iter()).for_each(|(a, b)| *a = *b);
    }
    let (mu, _) = m.encode_batch(full.view())?;
    let high = full.slice(ndarray::s![.., ..FLAG_INDEX]).to_owned();
    let labels = d.samples.iter().map(|s| s.collision).collect();
    Ok((high, mu, labels))
}

/// Reports on nested seeded subsamples of the given sizes.
pub fn stability_across_bins(
    d: &Dataset,
    m: &VaeModel,
    bin_sizes: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<EmbeddingReport>, MetricsError> {
    if let Some(&size) = bin_sizes.iter().find(|&&s| s > d.len()) {
        return Err(MetricsError::BinTooLarge {
            size,
            available: d.len(),
        });
    }
    let (high, low, labels) = embed(d, m)?;
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    bin_sizes
        .iter()
        .map(|&size| {
            let mut idx = order[..size].to_vec();
            idx.sort_unstable();
            let h = high.select(Axis(0), &idx);
            let l = low.select(Axis(0), &idx);
            let lab: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            embedding_report(h.view(), l.view(), &lab, k, seed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cloud(n: usize, dims: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, dims), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_embedding_is_perfect() {
        let p = cloud(60, 2, 1);
        assert_eq!(trustworthiness(p.view(), p.view(), 5).unwrap(), 1.0);
        assert_eq!(continuity(p.view(), p.view(), 5).unwrap(), 1.0);
    }

    #[test]
    fn full_neighbourhood_is_one_by_convention() {
        let h = cloud(20, 5, 2);
        let l = cloud(20, 2, 3);
        assert_eq!(trustworthiness(h.view(), l.view(), 19).unwrap(), 1.0);
    }

    #[test]
    fn argument_errors() {
        let h = cloud(10, 3, 0);
        let l = cloud(9, 2, 0);
        assert!(matches!(trustworthiness(h.view(), l.view(), 3), Err(MetricsError::Mismatch { .. })));
        assert!(matches!(trustworthiness(h.view(), h.view(), 10), Err(MetricsError::BadK { .. })));
        assert!(matches!(trustworthiness(h.view(), h.view(), 0), Err(MetricsError::BadK { .. })));
    }

    #[test]
    fn separated_clusters_have_high_silhouette() {
        let p = array![[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]];
        let s = silhouette(p.view(), &[false, false, true, true]);
        assert!(s > 0.95);
        let mixed = silhouette(p.view(), &[false, true, false, true]);
        assert!(mixed < 0.0);
        assert_eq!(silhouette(p.view(), &[true; 4]), 0.0);
    }

    #[test]
    fn spearman_of_monotone_map_is_one() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0).collect();
        assert!((spearman(&x, &y) - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((spearman(&x, &z) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_share_ranks() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
