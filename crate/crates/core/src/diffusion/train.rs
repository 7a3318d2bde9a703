//! Simplified-loss training and the model checkpoint container.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::net::{CondInput, DenoiserNet, NetShape, Preconditioner};
use super::normalize::Normalizer;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_LEARNING_RATE: f64 = 8e-5;
pub const DEFAULT_BATCH_SIZE: usize = 110;
pub const DEFAULT_COND_DROPOUT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub cond_dropout: f64,
    pub seed: u64,
    pub hidden: usize,
    pub blocks: usize,
    /// Optimizer steps per epoch; 0 means one pass over the dataset.
    pub steps_per_epoch: usize,
    /// Learning rate at the last epoch relative to `learning_rate`,
    /// reached by linear decay; 1 keeps it constant.
    pub final_lr_fraction: f64,
    pub precondition: Precondition,
}

/// Data scaling wrapped around the network; see [`Preconditioner`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precondition {
    None,
    /// Per-coordinate mean and spread.
    Diagonal,
    /// Mean and principal axes of the training data.
    #[default]
    Covariance,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 2000,
            cond_dropout: DEFAULT_COND_DROPOUT,
            seed: 0,
            hidden: 256,
            blocks: 4,
            steps_per_epoch: 0,
            final_lr_fraction: 1.0,
            precondition: Precondition::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::validation("final_lr_fraction must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.cond_dropout) {
            return Err(Error::validation("cond_dropout must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.t));
        let c2 = T::of(1.0 - self.beta2.powi(self.t));
        let (lr, eps) = (T::of(self.lr), T::of(self.eps));
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = b1 * self.m[k] + (T::one() - b1) * g;
            self.v[k] = b2 * self.v[k] + (T::one() - b2) * g * g;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// `mean_b ‖ε_b − ε̂_b‖²`.
pub fn ddpm_loss<T: Scalar>(eps_hat: ArrayView2<T>, eps: ArrayView2<T>) -> Result<T> {
    if eps_hat.dim() != eps.dim() {
        return Err(Error::validation("prediction and noise shapes differ"));
    }
    if eps.nrows() == 0 {
        return Err(Error::validation("empty batch"));
    }
    let sq: T = eps_hat.iter().zip(eps.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(sq / T::of(eps.nrows() as f64))
}

/// Everything needed to sample: schedule, weights and data scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionModel<T> {
    pub schedule: NoiseSchedule,
    pub net: DenoiserNet<T>,
    pub norm: Normalizer<T>,
    /// Scaling of the raw condition vectors, for conditional models.
    pub cond_norm: Option<Normalizer<T>>,
    pub config: TrainConfig,
}

impl<T: Scalar> DiffusionModel<T> {
    pub fn dim(&self) -> usize {
        self.net.shape.data_dim
    }

    pub fn conditional(&self) -> bool {
        self.net.shape.conditional()
    }

    /// Scales raw condition rows into network space.
    pub fn condition_rows(&self, raw: ArrayView2<T>) -> Result<Array2<T>> {
        match &self.cond_norm {
            Some(n) if raw.ncols() == n.dim() => Ok(n.normalize(raw)),
            Some(n) => Err(Error::validation(format!(
                "condition width {} differs from the model's {}",
                raw.ncols(),
                n.dim()
            ))),
            None => Err(Error::validation("model is unconditional")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let m: Self = serde_json::from_reader(std::io::BufReader::new(f))?;
        m.net.validate()?;
        if m.norm.dim() != m.dim() {
            return Err(Error::validation("checkpoint normalizer width differs from network"));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: DiffusionModel<T>,
    pub log: Vec<EpochLoss>,
}

pub fn write_log_csv<W: Write>(log: &[EpochLoss], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in log {
        w.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Trains an ε-predictor on raw (unnormalized) latents; `conditions` are
/// the raw condition rows paired with each datum, for conditional models.
pub fn train<T: Scalar>(
    data: ArrayView2<T>,
    conditions: Option<ArrayView2<T>>,
    schedule: NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(Error::validation("training set is empty"));
    }
    let norm = Normalizer::fit(data)?;
    let x = norm.normalize(data);
    let (cond_norm, c) = match conditions {
        Some(c) => {
            if c.nrows() != data.nrows() {
                return Err(Error::validation("one condition row per datum is required"));
            }
            let n = Normalizer::fit(c)?;
            let cn = n.normalize(c);
            (Some(n), Some(cn))
        }
        None => (None, None),
    };
    let mut shape = NetShape::new(x.ncols(), c.as_ref().map_or(0, |c| c.ncols()));
    shape.hidden = cfg.hidden;
    shape.blocks = cfg.blocks;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = DenoiserNet::new(shape, &mut rng)?;
    let ab = || (1..=schedule.steps).map(|t| schedule.alpha_bar_at(t)).collect();
    match cfg.precondition {
        Precondition::None => {}
        Precondition::Diagonal => net = net.with_preconditioner(Preconditioner::from_data(x.view(), ab())?)?,
        Precondition::Covariance => {
            net = net.with_preconditioner(Preconditioner::from_data_rotated(x.view(), ab())?)?
        }
    }
    let mut opt = Adam::new(net.num_params(), cfg.learning_rate);
    let steps = if cfg.steps_per_epoch > 0 {
        cfg.steps_per_epoch
    } else {
        data.nrows().div_ceil(cfg.batch_size)
    };
    let b = cfg.batch_size;
    let d = x.ncols();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![T::zero(); net.num_params()];
    let mut xb = Array2::<T>::zeros((b, d));
    let mut eps = Array2::<T>::zeros((b, d));
    let mut cb = c.as_ref().map(|c| Array2::<T>::zeros((b, c.ncols())));
    let mut taus = vec![0usize; b];
    let mut mask = vec![true; b];
    for epoch in 0..cfg.epochs {
        let progress = if cfg.epochs > 1 { epoch as f64 / (cfg.epochs - 1) as f64 } else { 0.0 };
        opt.lr = cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * progress);
        let mut total = 0.0;
        for _ in 0..steps {
            for r in 0..b {
                let i = rng.random_range(0..x.nrows());
                let tau = rng.random_range(1..=schedule.steps);
                taus[r] = tau;
                let ab = schedule.alpha_bar_at(tau);
                let (sa, sn) = (T::of(ab.sqrt()), T::of((1.0 - ab).sqrt()));
                for k in 0..d {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    let e = T::of(e);
                    eps[[r, k]] = e;
                    xb[[r, k]] = sa * x[[i, k]] + sn * e;
                }
                if let (Some(cb), Some(c)) = (cb.as_mut(), c.as_ref()) {
                    cb.row_mut(r).assign(&c.row(i));
                    mask[r] = rng.random::<f64>() >= cfg.cond_dropout;
                }
            }
            let cond = match cb.as_ref() {
                Some(cb) => CondInput::Masked(cb.view(), &mask),
                None => CondInput::Null,
            };
            let (pred, tape) = net.forward(xb.view(), &taus, cond)?;
            let loss = ddpm_loss(pred.view(), eps.view())?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "training loss became {} at epoch {epoch}; last finite epoch loss {:?}",
                    loss,
                    log.last().map(|l: &EpochLoss| l.loss)
                )));
            }
            total += loss.to_f64_lossy();
            let scale = T::of(2.0 / b as f64);
            let dy = (&pred - &eps).mapv(|v| v * scale);
            grad.iter_mut().for_each(|g| *g = T::zero());
            net.backward(&tape, dy.view(), Some(&mut grad));
            opt.step(&mut net.params, &grad);
        }
        let loss = total / steps as f64;
        log::debug!("epoch {epoch}: loss {loss:.6}");
        log.push(EpochLoss { epoch, loss });
    }
    Ok(TrainOutcome {
        model: DiffusionModel {
            schedule,
            net,
            norm,
            cond_norm,
            config: cfg.clone(),
        },
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_basics() {
        let e = Array2::from_shape_vec((2, 2), vec![1.0, -1.0, 0.5, 2.0]).unwrap();
        assert_eq!(ddpm_loss(e.view(), e.view()).unwrap(), 0.0);
        let z = Array2::zeros((2, 2));
        assert_eq!(ddpm_loss(z.view(), e.view()).unwrap(), (2.0 + 4.25) / 2.0);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![3.0f64, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g = vec![2.0 * p[0], 2.0 * p[1]];
            opt.step(&mut p, &g);
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2);
    }
}
