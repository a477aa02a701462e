//! Variational autoencoder with a two-dimensional latent.
//!
//! Encoder `18 -> hidden... -> 4` (mean and log-variance heads packed in
//! one output layer), decoder `2 -> reversed hidden... -> 18`. Hidden
//! layers use tanh; the last decoder field is read through a logistic
//! squash as the collision score. Gradients are hand-derived.

mod io;
mod train;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{Normalization, FIELDS, FLAG_INDEX};

pub use io::{FORMAT_VERSION, MAGIC};
pub use train::{evaluate, train, train_split, EpochStats, TrainConfig, TrainReport};

pub const LATENT: usize = 2;
pub const DEFAULT_HIDDEN: [usize; 3] = [300, 200, 75];

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training setup: {0}")]
    InvalidSetup(String),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("architecture mismatch: file has {found:?}, expected {expected:?}")]
    Architecture {
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fully connected layer; `w` is `inputs x outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-limit..limit));
        Dense {
            w,
            b: Array1::zeros(outputs),
        }
    }

    fn zeros_like(&self) -> Dense {
        Dense {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }
}

/// Stack of dense layers, tanh between them, linear at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        Mlp {
            layers: sizes
                .windows(2)
                .map(|p| Dense::glorot(p[0], p[1], rng))
                .collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.nrows()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    /// Returns every layer's output, input first.
    fn forward(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = acts[i].dot(&l.w);
            y += &l.b;
            if i + 1 < self.layers.len() {
                y.mapv_inplace(f64::tanh);
            }
            acts.push(y);
        }
        acts
    }

    fn output(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward(x).pop().unwrap()
    }

    /// Accumulates parameter gradients into `grads` and returns the
    /// gradient with respect to the input.
    fn backward(&self, acts: &[Array2<f64>], d_out: Array2<f64>, grads: &mut Mlp) -> Array2<f64> {
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                Zip::from(&mut delta)
                    .and(&acts[i + 1])
                    .for_each(|d, &a| *d *= 1.0 - a * a);
            }
            grads.layers[i].w += &acts[i].t().dot(&delta);
            grads.layers[i].b += &delta.sum_axis(Axis(0));
            delta = delta.dot(&self.layers[i].w.t());
        }
        delta
    }

    fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn visit(&self, f: &mut impl FnMut(f64)) {
        for l in &self.layers {
            l.w.iter().for_each(|&v| f(v));
            l.b.iter().for_each(|&v| f(v));
        }
    }

    fn visit_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(&mut *f);
            l.b.iter_mut().for_each(&mut *f);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub kl_weight: f64,
    /// Multiplier on the flag field's squared error (1 is plain MSE).
    pub flag_weight: f64,
    pub normalization: Normalization,
    /// Lineage tags written into the model file.
    pub dataset_hash: String,
    pub config_hash: String,
    pub tool_version: String,
}

/// Loss terms, all averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn all_finite(a: &Array2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

impl VaeModel {
    /// Fresh model with Glorot-uniform weights and zero biases.
    pub fn new(hidden: &[usize], kl_weight: f64, normalization: Normalization, seed: u64) -> Self {
        assert!(!hidden.is_empty(), "at least one hidden layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc = vec![FIELDS];
        enc.extend_from_slice(hidden);
        enc.push(2 * LATENT);
        let mut dec = vec![LATENT];
        dec.extend(hidden.iter().rev());
        dec.push(FIELDS);
        VaeModel {
            encoder: Mlp::new(&enc, &mut rng),
            decoder: Mlp::new(&dec, &mut rng),
            kl_weight,
            flag_weight: 1.0,
            normalization,
            dataset_hash: String::new(),
            tool_version: String::new(),
            config_hash: String::new(),
        }
    }

    pub fn hidden(&self) -> Vec<usize> {
        let s = self.encoder.sizes();
        s[1..s.len() - 1].to_vec()
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    /// Parameters in a fixed order: encoder layers then decoder layers,
    /// each as row-major weights followed by biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.encoder.visit(&mut |v| out.push(v));
        self.decoder.visit(&mut |v| out.push(v));
        out
    }

    pub fn set_params(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.param_count());
        let mut it = values.iter();
        let mut take = |v: &mut f64| *v = *it.next().unwrap();
        self.encoder.visit_mut(&mut take);
        self.decoder.visit_mut(&mut take);
    }

    /// Mean and log-variance for a batch of normalized rows.
    pub fn encode_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>), VaeError> {
        if x.ncols() != FIELDS {
            return Err(VaeError::InvalidSetup(format!("expected {FIELDS} columns")));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(VaeError::NonFinite("encoder input"));
        }
        let h = self.encoder.output(x);
        if !all_finite(&h) {
            return Err(VaeError::NonFinite("encoder output"));
        }
        Ok((
            h.slice(s![.., ..LATENT]).to_owned(),
            h.slice(s![.., LATENT..]).to_owned(),
        ))
    }

    pub fn encode(&self, x: &[f64; FIELDS]) -> Result<([f64; LATENT], [f64; LATENT]), VaeError> {
        let xa = ArrayView2::from_shape((1, FIELDS), x).unwrap();
        let (mu, lv) = self.encode_batch(xa)?;
        Ok(([mu[[0, 0]], mu[[0, 1]]], [lv[[0, 0]], lv[[0, 1]]]))
    }

    /// Decoded rows in normalized space; the flag column holds the
    /// logistic collision score in `[0, 1]`.
    pub fn decode_batch(&self, z: ArrayView2<f64>) -> Result<Array2<f64>, VaeError> {
        if z.ncols() != LATENT {
            return Err(VaeError::InvalidSetup(format!("expected {LATENT} latent columns")));
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(VaeError::NonFinite("latent input"));
        }
        let mut y = self.decoder.output(z);
        y.column_mut(FLAG_INDEX).mapv_inplace(sigmoid);
        if !all_finite(&y) {
            return Err(VaeError::NonFinite("decoder output"));
        }
        Ok(y)
    }

    pub fn decode(&self, z: &[f64; LATENT]) -> Result<[f64; FIELDS], VaeError> {
        let za = ArrayView2::from_shape((1, LATENT), z).unwrap();
        let y = self.decode_batch(za)?;
        let mut out = [0.0; FIELDS];
        out.iter_mut().zip(y.iter()).for_each(|(o, v)| *o = *v);
        Ok(out)
    }

    /// Batch loss with the reparameterization noise `eps` supplied by the
    /// caller (zeros gives the deterministic mean-path loss).
    pub fn loss(&self, x: ArrayView2<f64>, eps: ArrayView2<f64>, kl_weight: f64) -> Loss {
        self.loss_and_grad(x, eps, kl_weight, false).0
    }

    /// Loss plus (optionally) gradients with respect to every parameter,
    /// returned as a model-shaped container.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<f64>,
        eps: ArrayView2<f64>,
        kl_weight: f64,
        want_grad: bool,
    ) -> (Loss, Option<(Mlp, Mlp)>) {
        let bsz = x.nrows() as f64;
        let enc_acts = self.encoder.forward(x);
        let h = enc_acts.last().unwrap();
        let mu = h.slice(s![.., ..LATENT]);
        let lv = h.slice(s![.., LATENT..]);
        let std = lv.mapv(|v| (0.5 * v).exp());
        let z = &mu + &(&std * &eps);
        let dec_acts = self.decoder.forward(z.view());
        let mut xhat = dec_acts.last().unwrap().clone();
        xhat.column_mut(FLAG_INDEX).mapv_inplace(sigmoid);
        let mut diff = &xhat - &x;
        let fw = self.flag_weight;
        let flag_sq = diff.column(FLAG_INDEX).iter().map(|d| d * d).sum::<f64>();
        let recon = (diff.iter().map(|d| d * d).sum::<f64>() + (fw - 1.0) * flag_sq) / bsz;
        let kl = Zip::from(&mu)
            .and(&lv)
            .fold(0.0, |acc, &m, &l| acc + 0.5 * (m * m + l.exp() - 1.0 - l))
            / bsz;
        let loss = Loss {
            total: recon + kl_weight * kl,
            reconstruction: recon,
            kl,
        };
        if !want_grad {
            return (loss, None);
        }
        diff.column_mut(FLAG_INDEX).mapv_inplace(|d| fw * d);
        let mut d_y = diff.mapv(|d| 2.0 * d / bsz);
        Zip::from(d_y.column_mut(FLAG_INDEX))
            .and(xhat.column(FLAG_INDEX))
            .for_each(|g, &p| *g *= p * (1.0 - p));
        let mut g_dec = self.decoder.zeros_like();
        let d_z = self.decoder.backward(&dec_acts, d_y, &mut g_dec);
        let mut d_h = Array2::zeros(h.raw_dim());
        let kw = kl_weight / bsz;
        for r in 0..h.nrows() {
            for j in 0..LATENT {
                let (m, l) = (mu[[r, j]], lv[[r, j]]);
                d_h[[r, j]] = d_z[[r, j]] + kw * m;
                d_h[[r, LATENT + j]] =
                    d_z[[r, j]] * eps[[r, j]] * 0.5 * std[[r, j]] + kw * 0.5 * (l.exp() - 1.0);
            }
        }
        let mut g_enc = self.encoder.zeros_like();
        self.encoder.backward(&enc_acts, d_h, &mut g_enc);
        (loss, Some((g_enc, g_dec)))
    }

    /// Gradients flattened in [`VaeModel::params`] order.
    pub fn gradient(&self, x: ArrayView2<f64>, eps: ArrayView2<f64>, kl_weight: f64) -> (Loss, Vec<f64>) {
        let (loss, g) = self.loss_and_grad(x, eps, kl_weight, true);
        let (ge, gd) = g.unwrap();
        let mut out = Vec::with_capacity(self.param_count());
        ge.visit(&mut |v| out.push(v));
        gd.visit(&mut |v| out.push(v));
        (loss, out)
    }

    /// Normalizes a raw sample row, runs the mean path and decodes.
    pub fn reconstruct(&self, raw: &[f64; FIELDS]) -> Result<[f64; FIELDS], VaeError> {
        let (mu, _) = self.encode(&self.normalization.normalize(raw))?;
        self.decode(&mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn small_model(seed: u64) -> VaeModel {
        VaeModel::new(&[6, 5], 1.0, Normalization::identity(), seed)
    }

    fn batch(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, FIELDS), |(_, c)| {
            if c == FLAG_INDEX {
                (rng.random::<f64>() < 0.3) as u8 as f64
            } else {
                rng.random_range(-2.0..2.0)
            }
        })
    }

    #[test]
    fn default_architecture_shapes() {
        let m = VaeModel::new(&DEFAULT_HIDDEN, 1e-3, Normalization::identity(), 0);
        assert_eq!(m.encoder.sizes(), vec![18, 300, 200, 75, 4]);
        assert_eq!(m.decoder.sizes(), vec![2, 75, 200, 300, 18]);
        assert_eq!(m.hidden(), DEFAULT_HIDDEN.to_vec());
        let (mu, lv) = m.encode(&[0.1; FIELDS]).unwrap();
        assert_eq!((mu.len(), lv.len()), (2, 2));
        assert_eq!(m.decode(&mu).unwrap().len(), 18);
    }

    #[test]
    fn forward_passes_are_deterministic() {
        let m = small_model(3);
        let x = [0.3; FIELDS];
        assert_eq!(m.encode(&x).unwrap(), m.encode(&x).unwrap());
        assert_eq!(m.decode(&[0.2, -0.1]).unwrap(), m.decode(&[0.2, -0.1]).unwrap());
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let m = small_model(0);
        let mut x = [0.0; FIELDS];
        x[4] = f64::NAN;
        assert!(matches!(m.encode(&x), Err(VaeError::NonFinite(_))));
        assert!(matches!(m.decode(&[f64::INFINITY, 0.0]), Err(VaeError::NonFinite(_))));
    }

    #[test]
    fn kl_vanishes_at_standard_normal() {
        let mut m = small_model(1);
        let last = m.encoder.layers.last_mut().unwrap();
        last.w.fill(0.0);
        last.b.fill(0.0);
        let x = batch(4, 2);
        let l = m.loss(x.view(), Array2::zeros((4, LATENT)).view(), 1.0);
        assert_eq!(l.kl, 0.0);
    }

    #[test]
    fn perfect_reconstruction_has_zero_error() {
        let m = small_model(5);
        let z = Array2::<f64>::zeros((3, LATENT));
        let target = m.decode_batch(z.view()).unwrap();
        // encoder output is irrelevant once eps=0 and mean is pinned to 0
        let mut pinned = m.clone();
        let last = pinned.encoder.layers.last_mut().unwrap();
        last.w.fill(0.0);
        last.b.fill(0.0);
        let l = pinned.loss(target.view(), z.view(), 0.0);
        assert!(l.reconstruction < 1e-28);
    }

    #[test]
    fn params_round_trip() {
        let m = small_model(9);
        let p = m.params();
        assert_eq!(p.len(), m.param_count());
        let mut n = small_model(10);
        n.set_params(&p);
        assert_eq!(n.params(), p);
        assert_eq!(n.encoder, m.encoder);
    }

    #[test]
    fn gradient_has_one_entry_per_parameter() {
        let m = small_model(4);
        let x = batch(3, 1);
        let (_, g) = m.gradient(x.view(), Array2::zeros((3, LATENT)).view(), 1.0);
        assert_eq!(g.len(), m.param_count());
        assert!(g.iter().all(|v| v.is_finite()));
    }
}
