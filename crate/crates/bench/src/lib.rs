//! Shared inputs for the benchmarks.

use latentroute::{JointVector, RobotModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn configurations(robot: &RobotModel, n: usize, seed: u64) -> Vec<JointVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| robot.sample_configuration(&mut rng)).collect()
}

/// Undirected lattice of `side * side` nodes with unit-ish weights.
pub fn lattice(side: usize) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for r in 0..side {
        for c in 0..side {
            let u = r * side + c;
            let w = 1.0 + ((r * 7 + c * 13) % 5) as f64 * 0.25;
            if c + 1 < side {
                edges.push((u, u + 1, w));
            }
            if r + 1 < side {
                edges.push((u, u + side, w));
            }
        }
    }
    edges
}
