use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{train_mlp, Activation, Loss, MlpModel, MlpSpec, Network, NeuralError};
use crate::corpus::FeatureMatrix;
use crate::reduce::Reducer;

const LEARNING_RATE: f64 = 0.001;
const BATCH_SIZE: usize = 32;
const VALIDATION_FRACTION: f64 = 0.2;
const DNN_DROPOUT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AeVariant {
    #[serde(rename = "AE-1L")]
    Ae1L,
    #[serde(rename = "AE-3L")]
    Ae3L,
}

impl AeVariant {
    pub fn name(self) -> &'static str {
        match self {
            AeVariant::Ae1L => "AE-1L",
            AeVariant::Ae3L => "AE-3L",
        }
    }

    pub fn bottleneck(self) -> usize {
        match self {
            AeVariant::Ae1L => 64,
            AeVariant::Ae3L => 16,
        }
    }

    /// Training spec for an input of width `input_dim` (256 for opcode rows).
    pub fn spec(self, input_dim: usize, seed: u64) -> MlpSpec {
        let (layer_sizes, dropout) = match self {
            AeVariant::Ae1L => (vec![input_dim, 64, input_dim], vec![0.0]),
            // no dropout on the bottleneck
            AeVariant::Ae3L => (
                vec![input_dim, 64, 32, 16, 32, 64, input_dim],
                vec![0.4, 0.4, 0.0, 0.4, 0.4],
            ),
        };
        MlpSpec {
            activations: vec![Activation::Elu; layer_sizes.len() - 1],
            layer_sizes,
            dropout,
            loss: Loss::Mse,
            learning_rate: LEARNING_RATE,
            epochs: 100,
            batch_size: BATCH_SIZE,
            seed,
            validation_fraction: VALIDATION_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DnnVariant {
    #[serde(rename = "DNN-2L")]
    Dnn2L,
    #[serde(rename = "DNN-4L")]
    Dnn4L,
    #[serde(rename = "DNN-7L")]
    Dnn7L,
}

impl DnnVariant {
    pub fn name(self) -> &'static str {
        match self {
            DnnVariant::Dnn2L => "DNN-2L",
            DnnVariant::Dnn4L => "DNN-4L",
            DnnVariant::Dnn7L => "DNN-7L",
        }
    }

    pub fn hidden(self) -> &'static [usize] {
        match self {
            DnnVariant::Dnn2L => &[64],
            DnnVariant::Dnn4L => &[128, 32, 8],
            DnnVariant::Dnn7L => &[128, 64, 32, 8, 4],
        }
    }

    pub fn spec(self, input_dim: usize, seed: u64) -> MlpSpec {
        let hidden = self.hidden();
        let mut layer_sizes = vec![input_dim];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(1);
        let mut activations = vec![Activation::Elu; hidden.len()];
        activations.push(Activation::Sigmoid);
        MlpSpec {
            layer_sizes,
            activations,
            dropout: vec![DNN_DROPOUT; hidden.len()],
            loss: Loss::BinaryCrossEntropy,
            learning_rate: LEARNING_RATE,
            epochs: 200,
            batch_size: BATCH_SIZE,
            seed,
            validation_fraction: VALIDATION_FRACTION,
        }
    }
}

/// Trains an autoencoder on the rows of `matrix` and returns its encoder
/// half as a reducer.
pub fn fit_autoencoder(matrix: &FeatureMatrix, variant: AeVariant, seed: u64) -> Result<Reducer, NeuralError> {
    let spec = variant.spec(matrix.n_features(), seed);
    fit_autoencoder_with(matrix, &spec).map(|(reducer, _)| reducer)
}

/// Like [`fit_autoencoder`] with an explicit spec. The encoder ends at the
/// narrowest layer. Also returns the full trained model.
pub fn fit_autoencoder_with(matrix: &FeatureMatrix, spec: &MlpSpec) -> Result<(Reducer, MlpModel), NeuralError> {
    let n_in = spec.layer_sizes[0];
    if spec.layer_sizes.last() != Some(&n_in) {
        return Err(NeuralError::InvalidSpec(
            "autoencoder output width must equal input width".into(),
        ));
    }
    let model = train_mlp(spec, &matrix.data, &matrix.data)?;
    let bottleneck = spec
        .layer_sizes
        .iter()
        .enumerate()
        .min_by_key(|&(i, &w)| (w, i))
        .map(|(i, _)| i)
        .unwrap();
    let encoder = model.network.truncated(bottleneck.max(1));
    Ok((Reducer::Encoder { network: encoder }, model))
}

/// A trained sigmoid-output classifier. Scores are malware probabilities
/// and prediction thresholds at 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnnClassifier {
    pub variant: Option<DnnVariant>,
    pub model: MlpModel,
}

impl DnnClassifier {
    pub const THRESHOLD: f64 = 0.5;

    pub fn network(&self) -> &Network {
        &self.model.network
    }

    pub fn score_rows(&self, x: &Array2<f64>) -> Vec<f64> {
        self.model.network.forward(x).column(0).to_vec()
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        let x = Array2::from_shape_vec((1, row.len()), row.to_vec()).expect("row shape");
        self.score_rows(&x)[0]
    }
}

pub fn train_dnn(matrix: &FeatureMatrix, variant: DnnVariant, seed: u64) -> Result<DnnClassifier, NeuralError> {
    let spec = variant.spec(matrix.n_features(), seed);
    let mut clf = train_dnn_with(matrix, &spec)?;
    clf.variant = Some(variant);
    Ok(clf)
}

pub fn train_dnn_with(matrix: &FeatureMatrix, spec: &MlpSpec) -> Result<DnnClassifier, NeuralError> {
    if spec.loss != Loss::BinaryCrossEntropy || spec.layer_sizes.last() != Some(&1) {
        return Err(NeuralError::InvalidSpec(
            "classifier needs one sigmoid output with cross-entropy".into(),
        ));
    }
    let y: Vec<f64> = matrix
        .targets()
        .into_iter()
        .map(|m| if m { 1.0 } else { 0.0 })
        .collect();
    let targets =
        Array2::from_shape_vec((matrix.n_rows(), 1), y).map_err(|e| NeuralError::ShapeMismatch(e.to_string()))?;
    let model = train_mlp(spec, &matrix.data, &targets)?;
    Ok(DnnClassifier { variant: None, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Scale};
    use rand::Rng as _;

    fn matrix(data: Array2<f64>, labels: Vec<Label>) -> FeatureMatrix {
        let (n, d) = data.dim();
        FeatureMatrix::new(
            (0..n).map(|i| format!("r{i}")).collect(),
            labels,
            data,
            (0..d).map(|j| format!("f{j}")).collect(),
            Scale::RowNormalized,
        )
        .unwrap()
    }

    #[test]
    fn published_architectures() {
        let ae1 = AeVariant::Ae1L.spec(256, 0);
        assert_eq!(ae1.layer_sizes, vec![256, 64, 256]);
        let ae3 = AeVariant::Ae3L.spec(256, 0);
        assert_eq!(ae3.layer_sizes, vec![256, 64, 32, 16, 32, 64, 256]);
        assert_eq!(ae3.dropout[2], 0.0);
        assert_eq!(ae3.epochs, 100);
        assert_eq!(DnnVariant::Dnn2L.spec(256, 0).layer_sizes, vec![256, 64, 1]);
        assert_eq!(DnnVariant::Dnn4L.spec(256, 0).layer_sizes, vec![256, 128, 32, 8, 1]);
        assert_eq!(
            DnnVariant::Dnn7L.spec(256, 0).layer_sizes,
            vec![256, 128, 64, 32, 8, 4, 1]
        );
        assert_eq!(DnnVariant::Dnn7L.spec(15, 0).layer_sizes[0], 15);
        for v in [DnnVariant::Dnn2L, DnnVariant::Dnn4L, DnnVariant::Dnn7L] {
            let s = v.spec(30, 0);
            assert_eq!(s.epochs, 200);
            assert_eq!(s.batch_size, 32);
            assert!(s.validate().is_ok());
        }
    }

    #[test]
    fn encoder_widths() {
        let mut rng = crate::rng::seeded(5);
        let data = Array2::from_shape_simple_fn((20, 256), || rng.random::<f64>() / 256.0);
        let m = matrix(data, vec![Label::Benign; 20]);
        for (v, width) in [(AeVariant::Ae1L, 64), (AeVariant::Ae3L, 16)] {
            let mut spec = v.spec(256, 1);
            spec.epochs = 2;
            let (reducer, model) = fit_autoencoder_with(&m, &spec).unwrap();
            assert_eq!(reducer.output_dim(), width);
            assert_eq!(reducer.input_dim(), 256);
            assert_eq!(model.history.len(), 2);
            assert_eq!(reducer.apply(&m).unwrap().n_features(), width);
        }
    }

    #[test]
    fn dnn_separates_margin_data() {
        let mut rng = crate::rng::seeded(17);
        let w = [1.0, -1.0, 0.5, 0.0];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        while labels.len() < 200 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let m: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            if m.abs() < 1.0 {
                continue;
            }
            rows.extend(x);
            labels.push(Label::from_bool(m > 0.0));
        }
        let m = matrix(Array2::from_shape_vec((200, 4), rows).unwrap(), labels);
        let clf = train_dnn(&m, DnnVariant::Dnn2L, 3).unwrap();
        let acc = clf.model.history.last().unwrap().train_acc.unwrap();
        assert!(acc >= 0.95, "train accuracy {acc}");
        let scores = clf.score_rows(&m.data);
        assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
        assert_eq!(clf.score(m.row(0)), scores[0]);
    }
}
