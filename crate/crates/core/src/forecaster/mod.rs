//! From-scratch LSTM regressor: cell, backpropagation through time,
//! first-order optimizers and an early-stopping training loop.

mod lstm;
mod optim;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lstm::{
    batch_gradient, batch_loss, forward, forward_train, lstm_cell_forward, CellState, DropoutMasks, LayerParams,
    LstmParams,
};
pub use optim::{optimizer_step, OptimizerState};
pub use train::{evaluate_mse, predict_day, train, EpochRecord, TrainConfig, TrainedModel};

/// Output-head activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Linear,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Sigmoid, Activation::Relu, Activation::Linear];

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => lstm::sigmoid(z),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = lstm::sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
    RmsProp,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::Adam, OptimizerKind::Sgd, OptimizerKind::RmsProp];
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::RmsProp => "rmsprop",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            other => Err(Error::Argument(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// One point of the tuning space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub layers: usize,
    /// Hidden units, shared by every layer.
    pub neurons: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            layers: 1,
            neurons: 10,
            dropout: 0.1,
            activation: Activation::Linear,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-2,
            batch_size: 64,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.neurons == 0 || self.batch_size == 0 {
            return Err(Error::Argument("layers, neurons and batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Argument(format!("dropout {} not in [0,1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }

    /// Compact label, e.g. `L=1 n=[20] D=0.217 adam(1e-2) linear b=64`.
    pub fn label(&self) -> String {
        format!(
            "L={} n=[{}] D={:.3} {}({:.0e}) {} b={}",
            self.layers,
            self.neurons,
            self.dropout,
            self.optimizer,
            self.learning_rate,
            match self.activation {
                Activation::Sigmoid => "sigmoid",
                Activation::Relu => "relu",
                Activation::Linear => "linear",
            },
            self.batch_size
        )
    }
}
