use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activation, Dataset, ModelKind, ModelSpec};
use crate::autodiff::softmax;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Input width, hidden widths, class count.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

struct Layer {
    weight: Vec<f64>,
    bias: Vec<f64>,
    n_in: usize,
    n_out: usize,
}

impl Layer {
    fn forward(&self, input: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|r| {
                let row = &self.weight[r * self.n_in..(r + 1) * self.n_in];
                row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + self.bias[r]
            })
            .collect()
    }
}

fn activate(kind: Activation, z: &[f64]) -> Vec<f64> {
    match kind {
        Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
        Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
    }
}

/// Derivative of the activation expressed through its output `a`.
fn activation_slope(kind: Activation, a: f64) -> f64 {
    match kind {
        Activation::Relu => {
            if a > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Tanh => 1.0 - a * a,
    }
}

/// Full-batch gradient descent on mean softmax cross-entropy.
///
/// Weights start Glorot-uniform from a ChaCha8 stream seeded with
/// `config.seed`, biases at zero. Per-sample gradients are accumulated in
/// dataset order, so identical inputs give bit-identical weights.
pub fn train_mlp(dataset: &Dataset, config: &TrainConfig) -> Result<ModelSpec> {
    if dataset.is_empty() {
        return Err(Error::Precondition("training dataset is empty".into()));
    }
    if config.epochs == 0 {
        return Err(Error::Precondition("epochs must be at least 1".into()));
    }
    if !(config.learning_rate > 0.0) || !config.learning_rate.is_finite() {
        return Err(Error::Precondition("learning rate must be positive".into()));
    }
    let sizes = &config.layer_sizes;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidSpec(format!("invalid layer sizes {sizes:?}")));
    }
    if sizes[0] != dataset.n_features() {
        return Err(Error::InvalidSpec(format!(
            "input layer has {} units but dataset has {} features",
            sizes[0],
            dataset.n_features()
        )));
    }
    let n_classes = *sizes.last().unwrap();
    if n_classes < dataset.n_classes || n_classes < 2 {
        return Err(Error::InvalidSpec(format!(
            "output layer has {n_classes} units for {} classes",
            dataset.n_classes
        )));
    }
    dataset.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layers: Vec<Layer> = sizes
        .windows(2)
        .map(|p| {
            let (n_in, n_out) = (p[0], p[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            Layer {
                weight: (0..n_in * n_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect(),
                bias: vec![0.0; n_out],
                n_in,
                n_out,
            }
        })
        .collect();
    let n_layers = layers.len();
    let scale = 1.0 / dataset.len() as f64;

    for epoch in 0..config.epochs {
        let mut grad_w: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.weight.len()]).collect();
        let mut grad_b: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();
        let mut loss = 0.0;
        for (x, &label) in dataset.inputs.iter().zip(&dataset.labels) {
            // activations[0] is the input, activations[i+1] the output of layer i
            let mut activations = vec![x.values().to_vec()];
            for (i, layer) in layers.iter().enumerate() {
                let z = layer.forward(&activations[i]);
                let a = if i + 1 < n_layers {
                    activate(config.activation, &z)
                } else {
                    z
                };
                activations.push(a);
            }
            let logits = &activations[n_layers];
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_norm = top + logits.iter().map(|z| (z - top).exp()).sum::<f64>().ln();
            loss += log_norm - logits[label];
            let probs = softmax(logits);

            let mut delta: Vec<f64> = probs;
            delta[label] -= 1.0;
            for i in (0..n_layers).rev() {
                let input = &activations[i];
                let layer = &layers[i];
                for (r, d) in delta.iter().enumerate() {
                    let row = &mut grad_w[i][r * layer.n_in..(r + 1) * layer.n_in];
                    for (g, v) in row.iter_mut().zip(input) {
                        *g += d * v;
                    }
                    grad_b[i][r] += d;
                }
                if i > 0 {
                    let mut back = vec![0.0; layer.n_in];
                    for (r, d) in delta.iter().enumerate() {
                        let row = &layer.weight[r * layer.n_in..(r + 1) * layer.n_in];
                        for (b, w) in back.iter_mut().zip(row) {
                            *b += w * d;
                        }
                    }
                    for (b, a) in back.iter_mut().zip(input) {
                        *b *= activation_slope(config.activation, *a);
                    }
                    delta = back;
                }
            }
        }
        if !(loss * scale).is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        for (layer, (gw, gb)) in layers.iter_mut().zip(grad_w.iter().zip(&grad_b)) {
            for (w, g) in layer.weight.iter_mut().zip(gw) {
                *w -= config.learning_rate * g * scale;
            }
            for (b, g) in layer.bias.iter_mut().zip(gb) {
                *b -= config.learning_rate * g * scale;
            }
        }
        if layers
            .iter()
            .any(|l| l.weight.iter().chain(&l.bias).any(|v| !v.is_finite()))
        {
            return Err(Error::TrainingDiverged { epoch });
        }
    }

    let mut parameters = BTreeMap::new();
    for (i, layer) in layers.into_iter().enumerate() {
        parameters.insert(format!("layer{i}.weight"), layer.weight);
        parameters.insert(format!("layer{i}.bias"), layer.bias);
    }
    let mut spec = ModelSpec {
        kind: ModelKind::MlpClassifier,
        layer_sizes: sizes.clone(),
        activation: config.activation,
        parameters,
        target_index: 0,
        seed: Some(config.seed),
        training_accuracy: None,
    };
    spec.validate()?;
    let network = spec.output_network()?;
    let mut correct = 0usize;
    for (x, &label) in dataset.inputs.iter().zip(&dataset.labels) {
        if network.predict(x)? == label {
            correct += 1;
        }
    }
    spec.training_accuracy = Some(correct as f64 / dataset.len() as f64);
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::gen_synthetic;

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            layer_sizes: vec![2, 8, 2],
            activation: Activation::Tanh,
            epochs,
            learning_rate: 0.1,
            seed: 7,
        }
    }

    #[test]
    fn zero_epochs_is_rejected() {
        let ds = gen_synthetic(7, 20, 2, 2).unwrap();
        assert!(matches!(train_mlp(&ds, &config(0)), Err(Error::Precondition(_))));
    }

    #[test]
    fn layer_sizes_must_fit_dataset() {
        let ds = gen_synthetic(7, 20, 3, 2).unwrap();
        assert!(matches!(train_mlp(&ds, &config(5)), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn divergence_is_detected() {
        let ds = gen_synthetic(7, 20, 2, 2).unwrap();
        let mut cfg = config(50);
        cfg.activation = Activation::Relu;
        cfg.learning_rate = 1e200;
        assert!(matches!(
            train_mlp(&ds, &cfg),
            Err(Error::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let ds = gen_synthetic(7, 40, 2, 2).unwrap();
        let a = train_mlp(&ds, &config(20)).unwrap();
        let b = train_mlp(&ds, &config(20)).unwrap();
        for (k, v) in &a.parameters {
            let w = &b.parameters[k];
            assert!(v.iter().zip(w).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
