//! Analytic VAE gradients against central finite differences.

use latentroute::dataset::{Normalization, FIELDS, FLAG_INDEX};
use latentroute::vae::{VaeModel, DEFAULT_HIDDEN, LATENT};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely against it.
const FLOOR: f64 = 1e-6;

fn batch(rows: usize, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<f64>) {
    let x = Array2::from_shape_fn((rows, FIELDS), |(_, c)| {
        if c == FLAG_INDEX {
            (rng.random::<f64>() < 0.4) as u8 as f64
        } else {
            rng.random_range(-1.5..1.5)
        }
    });
    let eps = Array2::from_shape_simple_fn((rows, LATENT), || StandardNormal.sample(rng));
    (x, eps)
}

fn central_difference(model: &VaeModel, x: &Array2<f64>, eps: &Array2<f64>, kw: f64, i: usize) -> f64 {
    let base = model.params();
    let mut probe = model.clone();
    let mut p = base.clone();
    p[i] = base[i] + STEP;
    probe.set_params(&p);
    let up = probe.loss(x.view(), eps.view(), kw).total;
    p[i] = base[i] - STEP;
    probe.set_params(&p);
    let down = probe.loss(x.view(), eps.view(), kw).total;
    (up - down) / (2.0 * STEP)
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

#[test]
fn every_parameter_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut model = VaeModel::new(&[10, 8, 6], 0.5, Normalization::identity(), 7);
    model.flag_weight = 3.0;
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let (x, eps) = batch(3, &mut rng);
        let (_, grad) = model.gradient(x.view(), eps.view(), 0.5);
        for (i, &g) in grad.iter().enumerate() {
            let n = central_difference(&model, &x, &eps, 0.5, i);
            let e = relative_error(g, n);
            assert!(e <= 1e-4, "param {i}: analytic {g} numeric {n}");
            worst = worst.max(e);
        }
    }
    println!("worst relative error {worst:e} over {} params", model.param_count());
}

#[test]
fn full_architecture_sampled_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = VaeModel::new(&DEFAULT_HIDDEN, 1e-3, Normalization::identity(), 3);
    let (x, eps) = batch(3, &mut rng);
    let (_, grad) = model.gradient(x.view(), eps.view(), 1e-3);
    let n = model.param_count();
    for _ in 0..300 {
        let i = rng.random_range(0..n);
        let num = central_difference(&model, &x, &eps, 1e-3, i);
        assert!(relative_error(grad[i], num) <= 1e-4, "param {i}: {} vs {num}", grad[i]);
    }
}

#[test]
fn kl_is_never_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..20 {
        let model = VaeModel::new(&[8, 4], 1.0, Normalization::identity(), seed);
        let (x, eps) = batch(5, &mut rng);
        assert!(model.loss(x.view(), eps.view(), 1.0).kl >= 0.0);
    }
}
