use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::model::{LossWeights, NetworkModel};
use super::Tensor;
use crate::error::{Error, Result};
use crate::metrics;
use crate::preprocess::PreprocessedSample;
use crate::rng;

const SHUFFLE_STREAM: u64 = 1;
const AUGMENT_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss_weights: LossWeights,
    pub seed: u64,
    /// Rotation/noise on images and jitter on height/weight, training split only.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loss_weights: LossWeights::default(),
            seed: 7,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        self.loss_weights.validate()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(model: &NetworkModel, cfg: &TrainConfig) -> Self {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            step: 0,
            m: model.zero_grads(),
            v: model.zero_grads(),
        }
    }

    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_mae_pbf: f64,
    pub train_mae_smm: f64,
    pub val_mae_pbf: f64,
    pub val_mae_smm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: usize,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "epoch,train_loss,val_loss,train_mae_pbf,train_mae_smm,val_mae_pbf,val_mae_smm\n",
        );
        for e in &self.epochs {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                e.epoch,
                e.train_loss,
                e.val_loss,
                e.train_mae_pbf,
                e.train_mae_smm,
                e.val_mae_pbf,
                e.val_mae_smm
            )
            .unwrap();
        }
        s
    }
}

fn task_maes(model: &NetworkModel, samples: &[PreprocessedSample]) -> Result<(f64, f64)> {
    let preds = model.predict_batch(samples)?;
    let ep: Vec<f64> = samples.iter().zip(&preds).map(|(s, p)| s.targets.pbf - p.pbf).collect();
    let es: Vec<f64> = samples.iter().zip(&preds).map(|(s, p)| s.targets.smm - p.smm).collect();
    Ok((metrics::mae(&ep)?, metrics::mae(&es)?))
}

/// Mini-batch Adam training. Returns the parameters of the epoch with the
/// lowest validation loss together with the per-epoch history.
pub fn train(
    model: &NetworkModel,
    train_set: &[PreprocessedSample],
    val_set: &[PreprocessedSample],
    cfg: &TrainConfig,
) -> Result<(NetworkModel, History)> {
    train_with_progress(model, train_set, val_set, cfg, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with_progress(
    model: &NetworkModel,
    train_set: &[PreprocessedSample],
    val_set: &[PreprocessedSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(NetworkModel, History)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let mut current = model.clone();
    let mut adam = Adam::new(&current, cfg);
    let mut best = (f64::INFINITY, 0usize, current.clone());
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let order = rng::permutation(
            &mut rng::substream(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]),
            train_set.len(),
        );
        let mut loss_sum = 0.0;
        let mut abs_pbf = 0.0;
        let mut abs_smm = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<PreprocessedSample> = chunk
                .iter()
                .map(|&i| {
                    if cfg.augment {
                        let mut r = rng::substream(cfg.seed, &[AUGMENT_STREAM, epoch as u64, i as u64]);
                        train_set[i].augmented(&mut r, &current.preprocess, &current.norm_stats)
                    } else {
                        Ok(train_set[i].clone())
                    }
                })
                .collect::<Result<_>>()?;
            let (loss, grads, preds) = match current.backward_with_predictions(&batch, cfg.loss_weights) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => return Err(Error::Diverged { epoch, batch: b }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || !grads.iter().all(Tensor::all_finite) {
                return Err(Error::Diverged { epoch, batch: b });
            }
            loss_sum += loss * batch.len() as f64;
            for (s, p) in batch.iter().zip(&preds) {
                abs_pbf += (s.targets.pbf - p.pbf).abs();
                abs_smm += (s.targets.smm - p.smm).abs();
            }
            adam.update(current.parameters_mut(), &grads);
        }
        let n = train_set.len() as f64;
        let val_loss = match current.batch_loss(val_set, cfg.loss_weights) {
            Ok(v) if v.is_finite() => v,
            _ => return Err(Error::Diverged { epoch, batch: usize::MAX }),
        };
        let (vp, vs) = task_maes(&current, val_set)?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / n,
            val_loss,
            train_mae_pbf: abs_pbf / n,
            train_mae_smm: abs_smm / n,
            val_mae_pbf: vp,
            val_mae_smm: vs,
        });
        on_epoch(history.last().unwrap());
        if val_loss < best.0 {
            best = (val_loss, epoch, current.clone());
        }
    }
    Ok((
        best.2,
        History {
            epochs: history,
            best_epoch: best.1,
        },
    ))
}
