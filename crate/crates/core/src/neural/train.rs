use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{DenseGrad, Network};
use super::{Loss, MlpSpec, NeuralError};
use crate::rng::{child_seed, seeded};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub spec: MlpSpec,
    pub network: Network,
    pub history: Vec<EpochStats>,
}

impl MlpModel {
    /// CSV `epoch,train_loss,val_loss[,train_acc,val_acc]`.
    pub fn history_csv(&self) -> String {
        let classifier = self.spec.loss == Loss::BinaryCrossEntropy;
        let mut out = String::from("epoch,train_loss,val_loss");
        if classifier {
            out.push_str(",train_acc,val_acc");
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for h in &self.history {
            out.push_str(&format!("{},{},{}", h.epoch, h.train_loss, opt(h.val_loss)));
            if classifier {
                out.push_str(&format!(",{},{}", opt(h.train_acc), opt(h.val_acc)));
            }
            out.push('\n');
        }
        out
    }
}

struct Adam {
    step: i32,
    m: Vec<DenseGrad>,
    v: Vec<DenseGrad>,
    lr: f64,
}

impl Adam {
    fn new(net: &Network, lr: f64) -> Self {
        let zeros: Vec<DenseGrad> = net
            .layers
            .iter()
            .map(|l| DenseGrad {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: ndarray::Array1::zeros(l.bias.len()),
            })
            .collect();
        Adam {
            step: 0,
            m: zeros.clone(),
            v: zeros,
            lr,
        }
    }

    fn update(&mut self, net: &mut Network, grads: &[DenseGrad]) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let lr = self.lr;
        let apply = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        };
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| apply(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| apply(p, g, m, v));
        }
    }
}

fn accuracy(net: &Network, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let out = net.forward(x);
    let hits = out.iter().zip(y).filter(|(&p, &t)| (p >= 0.5) == (t >= 0.5)).count();
    hits as f64 / y.len() as f64
}

/// Trains a network with Adam on shuffled minibatches.
///
/// A seeded `validation_fraction` of the rows is held out and only used
/// for the per-epoch history. Weight init, the validation carve-out, the
/// shuffle order and dropout masks all derive from `spec.seed`.
pub fn train_mlp(spec: &MlpSpec, inputs: &Array2<f64>, targets: &Array2<f64>) -> Result<MlpModel, NeuralError> {
    spec.validate()?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(NeuralError::ShapeMismatch("no samples".into()));
    }
    if inputs.ncols() != spec.layer_sizes[0] {
        return Err(NeuralError::ShapeMismatch(format!(
            "input width {} vs input layer {}",
            inputs.ncols(),
            spec.layer_sizes[0]
        )));
    }
    let out_dim = *spec.layer_sizes.last().unwrap();
    if targets.nrows() != n || targets.ncols() != out_dim {
        return Err(NeuralError::ShapeMismatch(format!(
            "targets {:?} for {n} samples and output width {out_dim}",
            targets.shape()
        )));
    }

    let mut init_rng = seeded(child_seed(spec.seed, 1));
    let mut network = Network::init(&spec.layer_sizes, &spec.activations, &mut init_rng);
    let mut history = Vec::with_capacity(spec.epochs);
    if spec.epochs == 0 {
        return Ok(MlpModel {
            spec: spec.clone(),
            network,
            history,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(child_seed(spec.seed, 2)));
    let n_val = ((n as f64) * spec.validation_fraction).floor() as usize;
    let n_val = n_val.min(n - 1);
    let (train_idx, val_idx) = order.split_at(n - n_val);
    let x_train = inputs.select(Axis(0), train_idx);
    let y_train = targets.select(Axis(0), train_idx);
    let val = (n_val > 0).then(|| (inputs.select(Axis(0), val_idx), targets.select(Axis(0), val_idx)));

    let classifier = spec.loss == Loss::BinaryCrossEntropy;
    let mut adam = Adam::new(&network, spec.learning_rate);
    let mut shuffle_rng = seeded(child_seed(spec.seed, 3));
    let mut dropout_rng = seeded(child_seed(spec.seed, 4));
    let uses_dropout = spec.dropout.iter().any(|&p| p > 0.0);
    let mut batch_order: Vec<usize> = (0..x_train.nrows()).collect();

    for epoch in 0..spec.epochs {
        batch_order.shuffle(&mut shuffle_rng);
        for (b, chunk) in batch_order.chunks(spec.batch_size).enumerate() {
            let xb = x_train.select(Axis(0), chunk);
            let yb = y_train.select(Axis(0), chunk);
            let masks = uses_dropout.then(|| network.sample_masks(&spec.dropout, chunk.len(), &mut dropout_rng));
            let (value, grads) = network.loss_and_gradients(&xb, &yb, spec.loss, masks.as_ref());
            if !value.is_finite() {
                return Err(NeuralError::NonFiniteLoss { epoch, batch: b, value });
            }
            adam.update(&mut network, &grads);
        }

        let train_loss = network.loss(&x_train, &y_train, spec.loss);
        if !train_loss.is_finite() {
            return Err(NeuralError::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                value: train_loss,
            });
        }
        let val_loss = val.as_ref().map(|(x, y)| network.loss(x, y, spec.loss));
        history.push(EpochStats {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            train_acc: classifier.then(|| accuracy(&network, &x_train, &y_train)),
            val_acc: if classifier {
                val.as_ref().map(|(x, y)| accuracy(&network, x, y))
            } else {
                None
            },
        });
    }

    Ok(MlpModel {
        spec: spec.clone(),
        network,
        history,
    })
}
