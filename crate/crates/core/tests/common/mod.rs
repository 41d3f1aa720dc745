#![allow(dead_code, unused_imports)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitig_core::zoo::{Activation, ModelKind, ModelSpec};
use splitig_core::FeatureVector;

pub use splitig_oracles::{
    abpc_brute_force, dense_forward, finite_difference, logistic_alpha_star, max_relative_deviation,
    sigmoid, softmax_by_hand,
};

pub fn fv(v: &[f64]) -> FeatureVector {
    FeatureVector::new(v.to_vec()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_input(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> FeatureVector {
    fv(&(0..n).map(|_| rng.random_range(-half_width..=half_width)).collect::<Vec<_>>())
}

/// MLP with parameters uniform in [-1, 1].
pub fn random_mlp(rng: &mut ChaCha8Rng, sizes: &[usize], activation: Activation) -> ModelSpec {
    let mut parameters = BTreeMap::new();
    for (i, p) in sizes.windows(2).enumerate() {
        let w = (0..p[0] * p[1]).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let b = (0..p[1]).map(|_| rng.random_range(-1.0..=1.0)).collect();
        parameters.insert(format!("layer{i}.weight"), w);
        parameters.insert(format!("layer{i}.bias"), b);
    }
    let spec = ModelSpec {
        kind: ModelKind::MlpClassifier,
        layer_sizes: sizes.to_vec(),
        activation,
        parameters,
        target_index: 0,
        seed: None,
        training_accuracy: None,
    };
    spec.validate().unwrap();
    spec
}

/// Layer-by-layer evaluation straight from the parameter arrays.
pub fn mlp_logits_by_hand(spec: &ModelSpec, x: &[f64]) -> Vec<f64> {
    let n_layers = spec.layer_sizes.len() - 1;
    let layers: Vec<(&[f64], &[f64])> = (0..n_layers)
        .map(|i| {
            (
                spec.parameters[&format!("layer{i}.weight")].as_slice(),
                spec.parameters[&format!("layer{i}.bias")].as_slice(),
            )
        })
        .collect();
    let hidden: fn(f64) -> f64 = match spec.activation {
        Activation::Tanh => f64::tanh,
        Activation::Relu => |v| v.max(0.0),
    };
    dense_forward(&layers, hidden, x)
}
