use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lstm::{batch_gradient, forward, DropoutMasks, LstmParams};
use super::optim::{optimizer_step, OptimizerState};
use super::{Activation, HyperParams};
use crate::error::{Error, Result};
use crate::features::{make_windows, FeatureTensor, Normalization, Sample, Segment, SplitSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hyper: HyperParams,
    pub max_epochs: usize,
    /// Epochs without a validation improvement larger than `min_delta` before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub repeat: usize,
    pub lookback: usize,
}

impl TrainConfig {
    pub fn new(hyper: HyperParams, seed: u64) -> Self {
        Self {
            hyper,
            max_epochs: 500,
            patience: 20,
            min_delta: 1e-6,
            seed,
            repeat: 0,
            lookback: 24,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Argument("max_epochs and patience must be positive".into()));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::Argument("min_delta must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Best-validation snapshot plus everything needed to reuse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: LstmParams,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub norms: Vec<Normalization>,
    pub n_features: usize,
}

impl TrainedModel {
    pub fn activation(&self) -> Activation {
        self.config.hyper.activation
    }

    /// Normalized one-step prediction.
    pub fn predict(&self, window: &[f64]) -> Result<f64> {
        forward(&self.params, self.activation(), window)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.params.input_size() != m.n_features || !m.params.is_finite() {
            return Err(Error::Data("checkpoint parameters are inconsistent".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Dropout-free mean squared error over `samples`.
pub fn evaluate_mse(
    params: &LstmParams,
    activation: Activation,
    tensor: &FeatureTensor,
    samples: &[Sample],
    lookback: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("no samples to evaluate".into()));
    }
    let errs = samples
        .par_iter()
        .map(|s| {
            let y = forward(params, activation, tensor.window(s.region, s.target, lookback))?;
            Ok((y - tensor.label(s.region, s.target)).powi(2))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mse = errs.iter().sum::<f64>() / errs.len() as f64;
    if !mse.is_finite() {
        return Err(Error::NonFinite("evaluation loss".into()));
    }
    Ok(mse)
}

/// Seeded mini-batch training with early stopping on validation MSE.
pub fn train(tensor: &FeatureTensor, split: &SplitSpec, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let windows = make_windows(tensor, split, config.lookback)?;
    if windows.validation.is_empty() {
        return Err(Error::Argument("validation segment has no windows".into()));
    }
    let hp = &config.hyper;
    let w = config.lookback;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = LstmParams::init(tensor.n_features, hp.neurons, hp.layers, &mut rng);
    let mut opt = OptimizerState::new(hp.optimizer, hp.learning_rate, &params);

    let mut order: Vec<usize> = (0..windows.train.len()).collect();
    let mut history = Vec::new();
    let mut best = (params.clone(), f64::INFINITY, 0usize);
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(hp.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk
                .iter()
                .map(|&i| {
                    let s = windows.train[i];
                    (tensor.window(s.region, s.target, w), tensor.label(s.region, s.target))
                })
                .collect();
            let masks: Option<Vec<DropoutMasks>> = (hp.dropout > 0.0).then(|| {
                (0..batch.len())
                    .map(|_| DropoutMasks::sample(&mut rng, hp.layers, hp.neurons, hp.dropout))
                    .collect()
            });
            let (loss, grads) = batch_gradient(&params, hp.activation, &batch, masks.as_deref())?;
            loss_sum += loss * batch.len() as f64;
            optimizer_step(&mut params, &grads, &mut opt)?;
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_loss = evaluate_mse(&params, hp.activation, tensor, windows.segment(Segment::Validation), w)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.1 {
            if best.1 - val_loss > config.min_delta {
                stale = 0;
            } else {
                stale += 1;
            }
            best = (params.clone(), val_loss, epoch);
        } else {
            stale += 1;
        }
        if stale >= config.patience {
            break;
        }
    }
    let (params, best_val_loss, best_epoch) = best;
    Ok(TrainedModel {
        params,
        config: config.clone(),
        history,
        best_epoch,
        best_val_loss,
        norms: tensor.norms.clone(),
        n_features: tensor.n_features,
    })
}

/// One-step-ahead forecasts for every test bin, on the count scale, per region.
pub fn predict_day(model: &TrainedModel, tensor: &FeatureTensor, split: &SplitSpec) -> Result<Vec<Vec<f64>>> {
    if model.norms.len() != tensor.n_regions {
        return Err(Error::Data(format!(
            "model carries {} normalization records for {} regions",
            model.norms.len(),
            tensor.n_regions
        )));
    }
    if model.n_features != tensor.n_features {
        return Err(Error::Shape {
            expected: model.n_features,
            got: tensor.n_features,
        });
    }
    let w = model.config.lookback;
    let test = split.range(Segment::Test);
    if test.is_empty() || test.start < w {
        return Err(Error::Argument("test segment is empty or shorter than the lookback history".into()));
    }
    (0..tensor.n_regions)
        .into_par_iter()
        .map(|r| {
            test.clone()
                .map(|t| {
                    let y = model.predict(tensor.window(r, t, w))?;
                    let v = model.norms[r].denormalize(y).max(0.0);
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("forecast for region {r} bin {t}")));
                    }
                    Ok(v)
                })
                .collect()
        })
        .collect()
}
