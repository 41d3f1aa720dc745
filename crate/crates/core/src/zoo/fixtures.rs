//! Named, fully pinned models with their evaluation sets.

use std::fmt;
use std::str::FromStr;

use super::{gen_synthetic, make_analytic, train_mlp, Activation, Dataset, ModelKind, ModelSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::tensor::FeatureVector;

pub const FIXTURE_SEED: u64 = 7;
const TRAIN_SAMPLES: usize = 200;
const EVAL_SAMPLES: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// `F(x) = x0 + 2 x1`.
    Linear2d,
    /// `F(x) = σ(10 x)`.
    Logistic1d,
    /// 2-8-2 tanh MLP on two 2-d blobs.
    MlpBlob2d,
    /// 10-16-3 tanh MLP on three 10-d blobs; its class logits saturate along
    /// the path from the zero baseline.
    MlpSaturating,
}

pub const ALL_FIXTURES: [Fixture; 4] = [
    Fixture::Linear2d,
    Fixture::Logistic1d,
    Fixture::MlpBlob2d,
    Fixture::MlpSaturating,
];

impl Fixture {
    pub fn name(self) -> &'static str {
        match self {
            Fixture::Linear2d => "linear-2d",
            Fixture::Logistic1d => "logistic-1d",
            Fixture::MlpBlob2d => "mlp-blob-2d",
            Fixture::MlpSaturating => "mlp-saturating",
        }
    }

    fn shape(self) -> (usize, usize) {
        match self {
            Fixture::Linear2d => (2, 2),
            Fixture::Logistic1d => (1, 2),
            Fixture::MlpBlob2d => (2, 2),
            Fixture::MlpSaturating => (10, 3),
        }
    }

    /// Training configuration for the MLP fixtures.
    pub fn train_config(self) -> Option<TrainConfig> {
        let (layer_sizes, learning_rate) = match self {
            Fixture::MlpBlob2d => (vec![2, 8, 2], 0.1),
            Fixture::MlpSaturating => (vec![10, 16, 3], 0.5),
            _ => return None,
        };
        Some(TrainConfig {
            layer_sizes,
            activation: Activation::Tanh,
            epochs: 500,
            learning_rate,
            seed: FIXTURE_SEED,
        })
    }

    pub fn training_set(self) -> Result<Dataset> {
        let (d, k) = self.shape();
        gen_synthetic(FIXTURE_SEED, TRAIN_SAMPLES, d, k)
    }

    /// Held-out draws from the training distribution: samples following the
    /// training block of the same seeded generator.
    pub fn evaluation_set(self) -> Result<Dataset> {
        let (d, k) = self.shape();
        let mut all = gen_synthetic(FIXTURE_SEED, TRAIN_SAMPLES + EVAL_SAMPLES, d, k)?;
        all.inputs.drain(..TRAIN_SAMPLES);
        all.labels.drain(..TRAIN_SAMPLES);
        Ok(all)
    }

    /// Builds (and for MLPs, trains) the model. Deterministic.
    pub fn model(self) -> Result<ModelSpec> {
        match self {
            Fixture::Linear2d => make_analytic(ModelKind::Linear, &FeatureVector::new(vec![1.0, 2.0])?, 0.0, 1.0),
            Fixture::Logistic1d => {
                make_analytic(ModelKind::LogisticSaturator, &FeatureVector::new(vec![1.0])?, 0.0, 10.0)
            }
            Fixture::MlpBlob2d | Fixture::MlpSaturating => {
                let config = self.train_config().expect("mlp fixture");
                train_mlp(&self.training_set()?, &config)
            }
        }
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_FIXTURES
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown fixture `{s}`")))
    }
}
