use serde::{Deserialize, Serialize};

use super::RegressionTree;
use crate::error::{Error, Result};

/// `prediction(x) = base_score + learning_rate * sum_i tree_i(x)`, with the
/// tree sum accumulated left to right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<RegressionTree>,
}

impl TreeEnsemble {
    pub fn constant(base_score: f64, learning_rate: f64, feature_names: Vec<String>) -> Self {
        Self { base_score, learning_rate, feature_names, trees: Vec::new() }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_arity(x)?;
        Ok(self.predict_unchecked(x))
    }

    /// Prediction from the first `n_trees` trees only.
    pub fn predict_staged(&self, x: &[f64], n_trees: usize) -> Result<f64> {
        self.check_arity(x)?;
        Ok(self.staged(x, n_trees.min(self.trees.len())))
    }

    pub fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.staged(x, self.trees.len())
    }

    /// Copy keeping only the first `n_trees` trees.
    pub fn truncated(&self, n_trees: usize) -> Self {
        Self { trees: self.trees[..n_trees.min(self.trees.len())].to_vec(), ..self.clone() }
    }

    fn staged(&self, x: &[f64], m: usize) -> f64 {
        let mut sum = 0.0;
        for t in &self.trees[..m] {
            sum += t.predict(x);
        }
        self.base_score + self.learning_rate * sum
    }

    fn check_arity(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_names.len() {
            return Err(Error::Data(format!(
                "predictor vector has {} values, the ensemble expects {}",
                x.len(),
                self.feature_names.len()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: Self = serde_json::from_str(s)?;
        let p = e.feature_names.len();
        if e.trees.iter().any(|t| t.max_feature().is_some_and(|f| f >= p)) {
            return Err(Error::Data("ensemble tree refers to a feature beyond its schema".into()));
        }
        Ok(e)
    }
}
