//! Flat feature vectors with shape metadata.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A flat, finite, real-valued feature array.
///
/// `shape` is metadata only: all arithmetic in this crate works on the
/// flattened values. The product of `shape` always equals `len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
    shape: Vec<usize>,
}

impl FeatureVector {
    /// One-dimensional vector with shape `[values.len()]`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let shape = vec![values.len()];
        Self::with_shape(values, shape)
    }

    pub fn with_shape(values: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if shape.contains(&0) || shape.iter().product::<usize>() != values.len() {
            return Err(Error::ShapeMetadata {
                shape,
                len: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values, shape })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
            shape: vec![len],
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            values: vec![0.0; other.len()],
            shape: other.shape.clone(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Builds a vector with this vector's shape from new values.
    pub fn map_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::with_shape(values, self.shape.clone())
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::InputShape {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub(crate) fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}
