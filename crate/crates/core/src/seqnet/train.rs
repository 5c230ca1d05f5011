//! Mini-batch Adam training with early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::model::{backward_sample, forward_sample, EncoderDecoderConfig, EncoderDecoderModel, Parameters, TargetTransform};
use super::scalar::{Precision, Scalar};
use crate::dataset::WindowedDataset;
use crate::error::{Error, Result};

/// Samples per gradient work unit. Fixed so that the summation order, and
/// therefore the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Epochs without a validation improvement larger than `min_delta`
    /// before training stops.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Rescale the batch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
    /// Train on `ln(1 + RUL)` instead of RUL.
    pub log1p_target: bool,
    /// Standardize targets with the training mean and deviation.
    pub standardize_target: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 10,
            min_delta: 1e-4,
            seed: 0,
            precision: Precision::Single,
            clip_norm: None,
            log1p_target: false,
            standardize_target: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::domain("train: max_epochs and batch_size must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::domain("train: patience must be at least 1"));
        }
        let positive = [self.learning_rate, self.epsilon];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::domain("train: learning_rate and epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::domain("train: Adam betas must lie in [0, 1)"));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::domain("train: min_delta must be non-negative"));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::domain("train: clip_norm must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// RMSE in RUL days for one epoch. `*_rmse` scores the final timestep only;
/// `*_seq_rmse` scores every timestep. Training figures accumulate over the
/// epoch's batches, before each batch's update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_rmse: f64,
    pub train_seq_rmse: f64,
    pub val_rmse: f64,
    pub val_seq_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were returned (1-based).
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    /// Last epoch run.
    pub stopped_epoch: usize,
    pub early_stopped: bool,
}

/// A trained model with the optimizer state it finished with.
#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub model: EncoderDecoderModel<S>,
    pub optimizer: AdamState<S>,
    pub report: TrainReport,
}

/// Final-step and full-sequence predictions, in RUL days.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPredictions {
    pub last: Vec<f64>,
    pub sequence: Vec<f64>,
}

fn check_dataset<S: Scalar>(model: &EncoderDecoderModel<S>, ds: &WindowedDataset, name: &str) -> Result<()> {
    let cfg = model.config();
    if ds.is_empty() {
        return Err(Error::domain(format!("{name} set is empty")));
    }
    if ds.timesteps != cfg.timesteps || ds.n_features != cfg.input_features {
        return Err(Error::domain(format!(
            "{name} set is {} x {}, model expects {} x {}",
            ds.timesteps, ds.n_features, cfg.timesteps, cfg.input_features
        )));
    }
    Ok(())
}

fn to_scalar<S: Scalar>(v: &[f64]) -> Vec<S> {
    v.iter().map(|&x| S::from_f64(x)).collect()
}

fn sq(a: f64) -> f64 {
    a * a
}

impl<S: Scalar> EncoderDecoderModel<S> {
    /// Final-timestep RUL estimate (days) for each sample of a `B x T x F` batch.
    pub fn predict_rul(&self, x: &[S], batch: usize) -> Result<Vec<f64>> {
        let t = self.config().timesteps;
        let out = self.predict(x, batch)?;
        Ok(out
            .chunks_exact(t)
            .map(|row| self.target.decode(row[t - 1].to_f64().unwrap_or(f64::NAN)))
            .collect())
    }

    /// Predictions for every window of a dataset (parallel, order preserved).
    pub fn predict_dataset(&self, ds: &WindowedDataset) -> Result<DatasetPredictions> {
        check_dataset(self, ds, "prediction")?;
        let t = ds.timesteps;
        let per = t * ds.n_features;
        let sequence: Vec<f64> = (0..ds.len())
            .into_par_iter()
            .with_min_len(GRAD_CHUNK)
            .flat_map_iter(|s| {
                let x: Vec<S> = to_scalar(&ds.x[s * per..(s + 1) * per]);
                forward_sample(self.config(), self.params(), &x)
                    .output
                    .into_iter()
                    .map(|v| self.target.decode(v.to_f64().unwrap_or(f64::NAN)))
            })
            .collect();
        let last = sequence.chunks_exact(t).map(|r| r[t - 1]).collect();
        Ok(DatasetPredictions { last, sequence })
    }
}

/// Trains a freshly initialized model (weights seeded from `tcfg.seed`).
pub fn train_new<S: Scalar>(
    config: EncoderDecoderConfig,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    tcfg: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    let model = EncoderDecoderModel::init(config, tcfg.seed)?;
    train(model, train_set, val_set, tcfg)
}

/// Mini-batch Adam on sequence MSE. Returns the parameters of the epoch with
/// the lowest validation (final-step) RMSE.
pub fn train<S: Scalar>(
    mut model: EncoderDecoderModel<S>,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    tcfg: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    tcfg.validate()?;
    check_dataset(&model, train_set, "training")?;
    check_dataset(&model, val_set, "validation")?;

    model.target = if tcfg.standardize_target {
        TargetTransform::fit(&train_set.y, tcfg.log1p_target)
    } else {
        TargetTransform {
            log1p: tcfg.log1p_target,
            ..TargetTransform::default()
        }
    };
    let target = model.target;
    let cfg = model.config().clone();
    let t = cfg.timesteps;
    let per = t * cfg.input_features;
    let xs: Vec<S> = to_scalar(&train_set.x);
    let ys: Vec<S> = train_set.y.iter().map(|&v| S::from_f64(target.encode(v))).collect();
    let adam_cfg = tcfg.adam();
    let mut adam = AdamState::new(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed ^ 0x0005_eed0_fba7_c4e5);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Parameters<S>)> = None;
    let mut since_best = 0;
    let mut early_stopped = false;

    for epoch in 1..=tcfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sse_last = 0.0;
        let mut sse_seq = 0.0;
        for batch in order.chunks(tcfg.batch_size) {
            let norm = S::from_f64(2.0 / (batch.len() * t) as f64);
            let params = model.params();
            let parts: Vec<(Parameters<S>, Vec<S>)> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut g = Parameters::zeros(&cfg);
                    let mut outs = Vec::with_capacity(chunk.len() * t);
                    for &s in chunk {
                        let sc = forward_sample(&cfg, params, &xs[s * per..(s + 1) * per]);
                        let dy: Vec<S> = sc
                            .output
                            .iter()
                            .zip(&ys[s * t..(s + 1) * t])
                            .map(|(&p, &q)| norm * (p - q))
                            .collect();
                        backward_sample(&cfg, params, &sc, &dy, &mut g);
                        outs.extend_from_slice(&sc.output);
                    }
                    (g, outs)
                })
                .collect();

            let mut grads = Parameters::zeros(&cfg);
            let mut outs = Vec::with_capacity(batch.len() * t);
            for (g, o) in &parts {
                grads.add_assign(g);
                outs.extend_from_slice(o);
            }
            for (k, &s) in batch.iter().enumerate() {
                let truth = train_set.sample_y(s);
                for step in 0..t {
                    let p = target.decode(outs[k * t + step].to_f64().unwrap_or(f64::NAN));
                    let e = sq(p - truth[step]);
                    sse_seq += e;
                    if step == t - 1 {
                        sse_last += e;
                    }
                }
            }
            if !sse_seq.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    reason: "non-finite loss or gradient".into(),
                });
            }
            if let Some(clip) = tcfg.clip_norm {
                let norm = grads.l2_norm();
                if norm > clip {
                    grads.scale(S::from_f64(clip / norm));
                }
            }
            adam.update(&adam_cfg, model.params_mut(), &grads);
        }

        let n = train_set.len() as f64;
        let val = model.predict_dataset(val_set)?;
        let val_truth = val_set.final_targets();
        let val_rmse = rmse_of(&val.last, &val_truth);
        let val_seq_rmse = rmse_of(&val.sequence, &val_set.y);
        if !val_rmse.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: "non-finite validation error".into(),
            });
        }
        epochs.push(EpochStats {
            epoch,
            train_rmse: (sse_last / n).sqrt(),
            train_seq_rmse: (sse_seq / (n * t as f64)).sqrt(),
            val_rmse,
            val_seq_rmse,
        });
        log::debug!("epoch {epoch}: train {:.4} val {val_rmse:.4}", (sse_last / n).sqrt());

        let improved = match &best {
            None => true,
            Some((_, b, _)) => *b - val_rmse > tcfg.min_delta,
        };
        if improved {
            best = Some((epoch, val_rmse, model.params().clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tcfg.patience {
                early_stopped = true;
                break;
            }
        }
    }

    let (best_epoch, best_val_rmse, best_params) = best.expect("at least one epoch ran");
    let stopped_epoch = epochs.len();
    *model.params_mut() = best_params;
    Ok(TrainOutcome {
        model,
        optimizer: adam,
        report: TrainReport {
            epochs,
            best_epoch,
            best_val_rmse,
            stopped_epoch,
            early_stopped,
        },
    })
}

fn rmse_of(pred: &[f64], truth: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    (pred.iter().zip(truth).map(|(p, t)| sq(p - t)).sum::<f64>() / n).sqrt()
}
