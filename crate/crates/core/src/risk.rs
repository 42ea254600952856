//! Linear risk functionals `r(y) = sum_d w_d y_d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weighted mean over a target region. Weights are nonnegative and sum to 1;
/// points outside the region carry weight 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFunctional {
    weights: Vec<f64>,
}

impl RiskFunctional {
    /// Uniform mean over `region` on a grid of `d` points.
    pub fn target_region(d: usize, region: &[usize]) -> Result<Self> {
        if region.is_empty() {
            return Err(Error::Config("target region is empty".into()));
        }
        let mut weights = vec![0.0; d];
        for &i in region {
            if i >= d {
                return Err(Error::Config(format!("target region id {i} outside grid of size {d}")));
            }
            weights[i] = 1.0;
        }
        let n = weights.iter().filter(|&&w| w > 0.0).count() as f64;
        weights.iter_mut().for_each(|w| *w /= n);
        Ok(Self { weights })
    }

    pub fn uniform(d: usize) -> Self {
        Self { weights: vec![1.0 / d as f64; d] }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || !(total > 0.0) {
            return Err(Error::Config("risk weights must be nonnegative with a positive sum".into()));
        }
        Ok(Self { weights: weights.into_iter().map(|w| w / total).collect() })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Ids with positive weight.
    pub fn region(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    pub fn apply(&self, field: &[f64]) -> f64 {
        self.weights.iter().zip(field).filter(|(w, _)| **w > 0.0).map(|(w, y)| w * y).sum()
    }
}
