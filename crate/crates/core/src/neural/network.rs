use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Activation, Loss};
use crate::rng::Rng;

const ELU_ALPHA: f64 = 1.0;

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Elu => z.mapv(|v| if v > 0.0 { v } else { ELU_ALPHA * v.exp_m1() }),
            Activation::Sigmoid => z.mapv(sigmoid),
            Activation::Linear => z.clone(),
        }
    }

    /// Derivative, given pre-activation `z` and activation `a`.
    fn derivative(self, z: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Elu => {
                let mut d = a.clone();
                ndarray::Zip::from(&mut d).and(z).for_each(|d, &z| {
                    *d = if z > 0.0 { 1.0 } else { *d + ELU_ALPHA };
                });
                d
            }
            Activation::Sigmoid => a.mapv(|s| s * (1.0 - s)),
            Activation::Linear => Array2::ones(z.raw_dim()),
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

/// Fully connected layer, `out = act(x · weights + bias)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in × fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// Gradient of one [`Dense`] layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Stack of dense layers. Dropout lives in the training loop, so a
/// `Network` on its own always runs in inference mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Dense>,
}

/// Per-hidden-layer keep masks, already scaled by `1 / (1 - p)`.
pub type DropoutMasks = Vec<Option<Array2<f64>>>;

pub(crate) struct Trace {
    /// Layer inputs; `inputs[0]` is the batch.
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl Network {
    /// Uniform init in `±sqrt(6 / fan_in)`, zero biases.
    pub fn init(sizes: &[usize], activations: &[Activation], rng: &mut Rng) -> Self {
        assert_eq!(sizes.len(), activations.len() + 1);
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..limit));
                Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Network { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.ncols()
    }

    /// Inference-mode forward pass.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights);
            z += &layer.bias;
            a = layer.activation.apply(&z);
        }
        a
    }

    /// Pre-activation of the output layer (logits for a sigmoid head).
    pub fn forward_logits(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights);
            z += &layer.bias;
            if l == last {
                return z;
            }
            a = layer.activation.apply(&z);
        }
        unreachable!()
    }

    /// Samples inverted-dropout masks for a batch of `rows`.
    pub fn sample_masks(&self, dropout: &[f64], rows: usize, rng: &mut Rng) -> DropoutMasks {
        (0..self.layers.len())
            .map(|l| {
                let p = dropout.get(l).copied().unwrap_or(0.0);
                if p <= 0.0 || l + 1 == self.layers.len() {
                    return None;
                }
                let keep = 1.0 - p;
                let width = self.layers[l].weights.ncols();
                Some(Array2::from_shape_simple_fn((rows, width), || {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                }))
            })
            .collect()
    }

    pub(crate) fn forward_train(&self, x: &Array2<f64>, masks: Option<&DropoutMasks>) -> Trace {
        let mut inputs = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = inputs[l].dot(&layer.weights);
            z += &layer.bias;
            let a = layer.activation.apply(&z);
            let next = match masks.and_then(|m| m[l].as_ref()) {
                Some(mask) => &a * mask,
                None => a.clone(),
            };
            pre.push(z);
            post.push(a);
            if l + 1 < self.layers.len() {
                inputs.push(next);
            }
        }
        Trace { inputs, pre, post }
    }

    /// Mean loss over all batch entries, computed from a trace.
    pub(crate) fn trace_loss(&self, trace: &Trace, y: &Array2<f64>, loss: Loss) -> f64 {
        let n = y.len() as f64;
        match loss {
            Loss::Mse => {
                let out = trace.post.last().unwrap();
                out.iter().zip(y).map(|(a, t)| (a - t).powi(2)).sum::<f64>() / n
            }
            Loss::BinaryCrossEntropy => {
                let z = trace.pre.last().unwrap();
                z.iter().zip(y).map(|(&z, &t)| softplus(z) - t * z).sum::<f64>() / n
            }
        }
    }

    pub(crate) fn backward(
        &self,
        trace: &Trace,
        y: &Array2<f64>,
        loss: Loss,
        masks: Option<&DropoutMasks>,
    ) -> Vec<DenseGrad> {
        let n = y.len() as f64;
        let last = self.layers.len() - 1;

        // dL/dz of the output layer
        let mut dz = match loss {
            Loss::BinaryCrossEntropy => (&trace.post[last] - y) / n,
            Loss::Mse => {
                let da = (&trace.post[last] - y) * (2.0 / n);
                da * self.layers[last]
                    .activation
                    .derivative(&trace.pre[last], &trace.post[last])
            }
        };

        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let gw = trace.inputs[l].t().dot(&dz);
            let gb = dz.sum_axis(Axis(0));
            grads.push(DenseGrad { weights: gw, bias: gb });
            if l == 0 {
                break;
            }
            let mut da = dz.dot(&self.layers[l].weights.t());
            if let Some(mask) = masks.and_then(|m| m[l - 1].as_ref()) {
                da *= mask;
            }
            dz = da
                * self.layers[l - 1]
                    .activation
                    .derivative(&trace.pre[l - 1], &trace.post[l - 1]);
        }
        grads.reverse();
        grads
    }

    /// Mean loss and parameter gradients on one batch. With `masks`, the
    /// given dropout pattern is applied (training mode).
    pub fn loss_and_gradients(
        &self,
        x: &Array2<f64>,
        y: &Array2<f64>,
        loss: Loss,
        masks: Option<&DropoutMasks>,
    ) -> (f64, Vec<DenseGrad>) {
        let trace = self.forward_train(x, masks);
        let value = self.trace_loss(&trace, y, loss);
        let grads = self.backward(&trace, y, loss, masks);
        (value, grads)
    }

    /// Mean inference-mode loss.
    pub fn loss(&self, x: &Array2<f64>, y: &Array2<f64>, loss: Loss) -> f64 {
        let trace = self.forward_train(x, None);
        self.trace_loss(&trace, y, loss)
    }

    /// The first `n_layers` layers as their own network.
    pub fn truncated(&self, n_layers: usize) -> Network {
        Network {
            layers: self.layers[..n_layers].to_vec(),
        }
    }
}
