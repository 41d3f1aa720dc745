//! Built-in models: closed-form oracle fixtures, a small trainable MLP
//! classifier, a synthetic dataset generator, and weight-file persistence.

mod dataset;
pub mod fixtures;
mod persist;
mod train;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ComputeGraph, GraphBuilder, LogitNetwork};
use crate::error::{Error, Result};
use crate::tensor::FeatureVector;

pub use dataset::{gen_synthetic, Dataset};
pub use fixtures::{Fixture, ALL_FIXTURES};
pub use persist::{load_model, parse_model, render_model, save_model, FORMAT_HEADER};
pub use train::{train_mlp, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Linear,
    LogisticSaturator,
    MlpClassifier,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::LogisticSaturator => "logistic-saturator",
            ModelKind::MlpClassifier => "mlp-classifier",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "logistic-saturator" => Ok(ModelKind::LogisticSaturator),
            "mlp-classifier" => Ok(ModelKind::MlpClassifier),
            other => Err(Error::Version(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidSpec(format!("unknown activation `{other}`"))),
        }
    }
}

/// Parameters and structure of a built-in model.
///
/// Parameter names:
/// - analytic kinds: `w` (input weights), `bias` (1 value), and for the
///   logistic saturator `scale` (1 value);
/// - MLP: `layer{i}.weight` (row-major, `layer_sizes[i+1] x layer_sizes[i]`)
///   and `layer{i}.bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub parameters: BTreeMap<String, Vec<f64>>,
    pub target_index: usize,
    pub seed: Option<u64>,
    pub training_accuracy: Option<f64>,
}

/// `F(x) = w·x + bias` or `F(x) = σ(scale·(w·x + bias))`.
pub fn make_analytic(kind: ModelKind, w: &FeatureVector, bias: f64, scale: f64) -> Result<ModelSpec> {
    if w.is_empty() {
        return Err(Error::InvalidSpec("analytic model needs at least one weight".into()));
    }
    if !bias.is_finite() {
        return Err(Error::InvalidSpec("bias must be finite".into()));
    }
    let mut parameters = BTreeMap::new();
    parameters.insert("w".to_string(), w.values().to_vec());
    parameters.insert("bias".to_string(), vec![bias]);
    match kind {
        ModelKind::Linear => {}
        ModelKind::LogisticSaturator => {
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::Precondition(format!(
                    "logistic-saturator scale must be positive, got {scale}"
                )));
            }
            parameters.insert("scale".to_string(), vec![scale]);
        }
        ModelKind::MlpClassifier => {
            return Err(Error::InvalidSpec("mlp-classifier is not an analytic kind".into()))
        }
    }
    let spec = ModelSpec {
        kind,
        layer_sizes: vec![w.len(), 1],
        activation: Activation::Tanh,
        parameters,
        target_index: 0,
        seed: None,
        training_accuracy: None,
    };
    spec.validate()?;
    Ok(spec)
}

impl ModelSpec {
    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec has layer sizes")
    }

    fn param(&self, name: &str) -> Result<&[f64]> {
        self.parameters
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidSpec(format!("missing parameter `{name}`")))
    }

    fn expect_len(&self, name: &str, len: usize) -> Result<()> {
        let found = self.param(name)?.len();
        if found != len {
            return Err(Error::InvalidSpec(format!(
                "parameter `{name}` has {found} values, expected {len}"
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "layer sizes {:?} need at least two positive entries",
                self.layer_sizes
            )));
        }
        let expected_names: Vec<String> = match self.kind {
            ModelKind::Linear | ModelKind::LogisticSaturator => {
                if self.layer_sizes.len() != 2 || self.output_dim() != 1 {
                    return Err(Error::InvalidSpec(
                        "analytic models have layer sizes [n, 1]".into(),
                    ));
                }
                self.expect_len("w", self.input_dim())?;
                self.expect_len("bias", 1)?;
                let mut names = vec!["bias".to_string(), "w".to_string()];
                if self.kind == ModelKind::LogisticSaturator {
                    self.expect_len("scale", 1)?;
                    if !(self.param("scale")?[0] > 0.0) {
                        return Err(Error::InvalidSpec("scale must be positive".into()));
                    }
                    names.push("scale".to_string());
                }
                names
            }
            ModelKind::MlpClassifier => {
                let mut names = Vec::new();
                for (i, pair) in self.layer_sizes.windows(2).enumerate() {
                    self.expect_len(&format!("layer{i}.weight"), pair[0] * pair[1])?;
                    self.expect_len(&format!("layer{i}.bias"), pair[1])?;
                    names.push(format!("layer{i}.weight"));
                    names.push(format!("layer{i}.bias"));
                }
                names
            }
        };
        if let Some(extra) = self
            .parameters
            .keys()
            .find(|k| !expected_names.contains(k))
        {
            return Err(Error::InvalidSpec(format!("unexpected parameter `{extra}`")));
        }
        if let Some((name, _)) = self
            .parameters
            .iter()
            .find(|(_, v)| v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::InvalidSpec(format!("parameter `{name}` is not finite")));
        }
        if self.target_index >= self.output_dim() {
            return Err(Error::InvalidSpec(format!(
                "target index {} out of range for {} outputs",
                self.target_index,
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Same model, attributing to a different output component.
    pub fn with_target(&self, target_index: usize) -> Result<ModelSpec> {
        let spec = ModelSpec {
            target_index,
            ..self.clone()
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Lowers the model to a graph whose outputs are the MLP logits, or the
    /// single analytic output for the oracle kinds.
    pub fn output_network(&self) -> Result<LogitNetwork> {
        self.validate()?;
        let mut b = GraphBuilder::new(self.input_dim());
        let out = match self.kind {
            ModelKind::Linear => {
                let z = b.affine(b.input(), self.param("w")?.to_vec(), self.param("bias")?.to_vec())?;
                b.name(z, "linear")?;
                z
            }
            ModelKind::LogisticSaturator => {
                let z = b.affine(b.input(), self.param("w")?.to_vec(), self.param("bias")?.to_vec())?;
                b.name(z, "linear")?;
                let scaled = b.affine(z, self.param("scale")?.to_vec(), vec![0.0])?;
                b.name(scaled, "scale")?;
                b.sigmoid(scaled)?
            }
            ModelKind::MlpClassifier => {
                let n_layers = self.layer_sizes.len() - 1;
                let mut h = b.input();
                for i in 0..n_layers {
                    h = b.affine(
                        h,
                        self.param(&format!("layer{i}.weight"))?.to_vec(),
                        self.param(&format!("layer{i}.bias"))?.to_vec(),
                    )?;
                    b.name(h, format!("layer{i}"))?;
                    if i + 1 < n_layers {
                        h = match self.activation {
                            Activation::Relu => b.relu(h)?,
                            Activation::Tanh => b.tanh(h)?,
                        };
                    }
                }
                h
            }
        };
        b.finish_logits(out)
    }

    /// The scalar target function `F`: output component `target_index`.
    pub fn graph(&self) -> Result<ComputeGraph> {
        self.output_network()?.target_logit(self.target_index)
    }
}
