//! Minibatch training with momentum SGD and KL warm-up.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Loss, VaeError, VaeModel, DEFAULT_HIDDEN, LATENT};
use crate::dataset::{Dataset, Normalization, FIELDS, FLAG_INDEX};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub kl_weight: f64,
    /// Weight of the flag field inside the reconstruction error.
    pub flag_weight: f64,
    /// Fraction of epochs over which the KL weight ramps up linearly.
    pub warmup_fraction: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: DEFAULT_HIDDEN.to_vec(),
            epochs: 40,
            batch_size: 256,
            learning_rate: 1e-3,
            momentum: 0.9,
            kl_weight: 1e-3,
            flag_weight: 10.0,
            warmup_fraction: 0.1,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), VaeError> {
        let bad = |m: &str| Err(VaeError::InvalidSetup(m.to_string()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("learning rate must be positive and momentum in [0, 1)");
        }
        if !(self.flag_weight > 0.0) {
            return bad("flag weight must be positive");
        }
        if !(self.kl_weight >= 0.0) || !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad("kl weight must be non-negative and warm-up fraction in [0, 1]");
        }
        Ok(())
    }

    /// KL weight in effect during `epoch` (0-based).
    pub fn kl_weight_at(&self, epoch: usize) -> f64 {
        let warm = (self.warmup_fraction * self.epochs as f64).ceil() as usize;
        if warm == 0 {
            self.kl_weight
        } else {
            self.kl_weight * ((epoch + 1) as f64 / warm as f64).min(1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub kl_weight: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub train_samples: usize,
    pub heldout_samples: usize,
    /// Mean squared reconstruction error per held-out sample (mean path).
    pub heldout_reconstruction: f64,
    /// Share of held-out samples whose decoded flag (threshold 0.5)
    /// matches the true flag.
    pub flag_accuracy: f64,
}

fn normalized_matrix(d: &Dataset, norm: &Normalization) -> Array2<f64> {
    let mut x = Array2::zeros((d.len(), FIELDS));
    for (mut row, s) in x.axis_iter_mut(Axis(0)).zip(d.samples.iter()) {
        let r = norm.normalize(&s.to_row());
        row.iter_mut().zip(r.iter()).for_each(|(a, b)| *a = *b);
    }
    x
}

/// Mean-path reconstruction error and decoded-flag accuracy.
pub fn evaluate(model: &VaeModel, d: &Dataset) -> Result<(f64, f64), VaeError> {
    if d.is_empty() {
        return Ok((0.0, 0.0));
    }
    let x = normalized_matrix(d, &model.normalization);
    let mut err = 0.0;
    let mut hits = 0usize;
    for chunk in x.axis_chunks_iter(Axis(0), 1024) {
        let (mu, _) = model.encode_batch(chunk)?;
        let y = model.decode_batch(mu.view())?;
        err += (&y - &chunk).iter().map(|v| v * v).sum::<f64>();
        hits += y
            .column(FLAG_INDEX)
            .iter()
            .zip(chunk.column(FLAG_INDEX).iter())
            .filter(|(p, t)| (**p >= 0.5) == (**t >= 0.5))
            .count();
    }
    Ok((err / d.len() as f64, hits as f64 / d.len() as f64))
}

/// Splits (stratified), fits normalization on the training part and trains.
pub fn train(d: &Dataset, cfg: &TrainConfig) -> Result<(VaeModel, TrainReport), VaeError> {
    cfg.validate()?;
    let (mut tr, te) = d.split(cfg.train_fraction, cfg.seed)?;
    tr.fit_normalization();
    train_split(&tr, &te, cfg)
}

/// Trains on `train` (whose normalization must be fitted) and evaluates on
/// `heldout`.
pub fn train_split(
    train: &Dataset,
    heldout: &Dataset,
    cfg: &TrainConfig,
) -> Result<(VaeModel, TrainReport), VaeError> {
    cfg.validate()?;
    let norm = train
        .normalization
        .clone()
        .ok_or_else(|| VaeError::InvalidSetup("training split has no normalization".into()))?;
    let c = train.colliding_count();
    if c == 0 || c == train.len() {
        return Err(VaeError::InvalidSetup("training split needs both classes".into()));
    }
    if train.len() < cfg.batch_size {
        return Err(VaeError::InvalidSetup(format!(
            "{} training samples is fewer than batch size {}",
            train.len(),
            cfg.batch_size
        )));
    }
    let x = normalized_matrix(train, &norm);
    let mut model = VaeModel::new(&cfg.hidden, cfg.kl_weight, norm, cfg.seed);
    model.flag_weight = cfg.flag_weight;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_7a11);
    let mut params = model.params();
    let mut velocity = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let kw = cfg.kl_weight_at(epoch);
        order.shuffle(&mut rng);
        let mut sum = Loss {
            total: 0.0,
            reconstruction: 0.0,
            kl: 0.0,
        };
        let mut seen = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), idx);
            let eps = Array2::from_shape_simple_fn((idx.len(), LATENT), || StandardNormal.sample(&mut rng));
            let (loss, grad) = model.gradient(xb.view(), eps.view(), kw);
            if !loss.total.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                return Err(VaeError::Diverged { epoch });
            }
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad.iter()) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
            model.set_params(&params);
            let w = idx.len() as f64;
            sum.total += loss.total * w;
            sum.reconstruction += loss.reconstruction * w;
            sum.kl += loss.kl * w;
            seen += idx.len();
        }
        let n = seen as f64;
        let stats = EpochStats {
            epoch,
            kl_weight: kw,
            reconstruction: sum.reconstruction / n,
            kl: sum.kl / n,
            total: sum.total / n,
        };
        log::debug!(
            "epoch {epoch}: total {:.5} recon {:.5} kl {:.4}",
            stats.total,
            stats.reconstruction,
            stats.kl
        );
        epochs.push(stats);
    }
    let (heldout_reconstruction, flag_accuracy) = evaluate(&model, heldout)?;
    Ok((
        model,
        TrainReport {
            epochs,
            train_samples: train.len(),
            heldout_samples: heldout.len(),
            heldout_reconstruction,
            flag_accuracy,
        },
    ))
}
