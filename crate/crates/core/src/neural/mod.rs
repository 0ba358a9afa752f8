//! A small feed-forward network engine: dense layers with ELU / sigmoid /
//! linear activations, inverted dropout, Adam, MSE and binary
//! cross-entropy. It backs the autoencoder reducers and the DNN
//! classifiers.

mod models;
mod network;
mod train;

pub use models::{
    fit_autoencoder, fit_autoencoder_with, train_dnn, train_dnn_with, AeVariant, DnnClassifier, DnnVariant,
};
pub(crate) use network::sigmoid;
pub use network::{Dense, DenseGrad, DropoutMasks, Network};
pub use train::{train_mlp, EpochStats, MlpModel};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("loss became non-finite at epoch {epoch} (batch {batch}): {value}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Sigmoid,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    Mse,
    /// Requires a sigmoid output layer.
    BinaryCrossEntropy,
}

/// Architecture and optimizer settings for [`train_mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Node counts, input first.
    pub layer_sizes: Vec<usize>,
    /// One per non-input layer.
    pub activations: Vec<Activation>,
    /// Drop probability after each hidden layer (missing entries mean 0).
    pub dropout: Vec<f64>,
    pub loss: Loss,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of the inputs held out for validation history.
    pub validation_fraction: f64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: String| Err(NeuralError::InvalidSpec(m));
        let layers = self.layer_sizes.len();
        if layers < 2 {
            return bad("need at least input and output layers".into());
        }
        if self.layer_sizes.contains(&0) {
            return bad("zero-width layer".into());
        }
        if self.activations.len() != layers - 1 {
            return bad(format!(
                "{} activations for {} weight layers",
                self.activations.len(),
                layers - 1
            ));
        }
        if self.dropout.len() > layers - 2 {
            return bad(format!(
                "{} dropout entries for {} hidden layers",
                self.dropout.len(),
                layers - 2
            ));
        }
        if self.dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return bad("dropout probability outside [0, 1)".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction outside [0, 1)".into());
        }
        if self.loss == Loss::BinaryCrossEntropy && self.activations.last() != Some(&Activation::Sigmoid) {
            return bad("binary cross-entropy needs a sigmoid output".into());
        }
        Ok(())
    }
}
