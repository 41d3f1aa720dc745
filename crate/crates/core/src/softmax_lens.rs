//! Splits the gradient of a softmax probability into the damped target-logit
//! term and the cross-logit remainder:
//!
//! `∂S_t/∂x = S_t (1 - S_t) ∂F_t/∂x + Σ_{i≠t} (-S_t S_i) ∂F_i/∂x`.

use rayon::prelude::*;
use serde::Serialize;

use crate::autodiff::LogitNetwork;
use crate::error::{Error, Result};
use crate::path::PathSpec;
use crate::tensor::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoftmaxDecomposition {
    /// `∂S_t(F(x))/∂x` by reverse mode through the softmax.
    pub full_gradient: FeatureVector,
    /// `S_t (1 - S_t) ∂F_t/∂x`.
    pub target_term: FeatureVector,
    /// `full_gradient - target_term`.
    pub cross_terms: FeatureVector,
    /// `S_t (1 - S_t)`, in `[0, 0.25]`.
    pub damping_factor: f64,
    pub target_probability: f64,
}

pub fn decompose_softmax_gradient(
    network: &LogitNetwork,
    x: &FeatureVector,
    target: usize,
) -> Result<SoftmaxDecomposition> {
    if target >= network.n_logits() {
        return Err(Error::Precondition(format!(
            "target {target} out of range for {} logits",
            network.n_logits()
        )));
    }
    let (prob, full_gradient) = network.target_probability(target)?.forward_with_gradient(x)?;
    let logit_gradient = network.target_logit(target)?.gradient(x)?;
    let damping = prob * (1.0 - prob);
    let target_term = x.map_values(logit_gradient.values().iter().map(|g| damping * g).collect())?;
    let cross_terms = x.map_values(
        full_gradient
            .values()
            .iter()
            .zip(target_term.values())
            .map(|(f, t)| f - t)
            .collect(),
    )?;
    Ok(SoftmaxDecomposition {
        full_gradient,
        target_term,
        cross_terms,
        damping_factor: damping,
        target_probability: prob,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DampingProfile {
    pub alphas: Vec<f64>,
    pub target_probabilities: Vec<f64>,
    pub damping_factors: Vec<f64>,
}

/// `S_t (1 - S_t)` at every master-grid node of `path`.
pub fn damping_scan(network: &LogitNetwork, path: &PathSpec, target: usize) -> Result<DampingProfile> {
    path.validate()?;
    if network.input_dim() != path.input.len() {
        return Err(Error::InputShape {
            expected: network.input_dim(),
            found: path.input.len(),
        });
    }
    let head = network.target_probability(target)?;
    let alphas: Vec<f64> = (0..=path.n_steps).map(|j| path.grid_alpha(j)).collect();
    let probs = alphas
        .par_iter()
        .map(|&a| head.forward(&path.point(a)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(DampingProfile {
        damping_factors: probs.iter().map(|p| p * (1.0 - p)).collect(),
        target_probabilities: probs,
        alphas,
    })
}
