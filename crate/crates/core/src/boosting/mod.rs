//! Second-order gradient tree boosting with pluggable per-row losses.

mod cv;
mod engine;
mod ensemble;
mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cv::{cross_validate, CvResult};
pub use engine::{boost, boost_traced, init_estimate};
pub use ensemble::TreeEnsemble;
pub use tree::{fit_tree, fit_tree_presorted, Node, RegressionTree, SortedColumns};

/// Per-row loss in a single boosted parameter. A row is opaque to the
/// engine: a day, or a (grid point, day) pair.
pub trait LossAdapter: Sync {
    fn n_rows(&self) -> usize;

    /// Loss of `row` at prediction `pred`; `+inf` outside the parameter's
    /// support.
    fn loss(&self, row: usize, pred: f64) -> f64;

    /// First and second derivative of `loss` in `pred`.
    fn grad_hess(&self, row: usize, pred: f64) -> (f64, f64);

    /// Gradient and curvature used for tree fitting. Defaults to
    /// [`grad_hess`](Self::grad_hess); losses that are not convex in `pred`
    /// may return a positive surrogate curvature instead.
    fn newton_grad_hess(&self, row: usize, pred: f64) -> (f64, f64) {
        self.grad_hess(row, pred)
    }

    /// Cross-validation unit; rows sharing a group always land in the same
    /// fold.
    fn group(&self, row: usize) -> usize {
        row
    }

    fn total_loss(&self, rows: &[usize], preds: &[f64]) -> f64 {
        rows.iter().zip(preds).map(|(&r, &p)| self.loss(r, p)).sum()
    }
}

/// `0.5 (y - pred)^2`.
#[derive(Debug, Clone)]
pub struct SquaredError {
    pub targets: Vec<f64>,
}

impl LossAdapter for SquaredError {
    fn n_rows(&self) -> usize {
        self.targets.len()
    }

    fn loss(&self, row: usize, pred: f64) -> f64 {
        let r = pred - self.targets[row];
        0.5 * r * r
    }

    fn grad_hess(&self, row: usize, pred: f64) -> (f64, f64) {
        (pred - self.targets[row], 1.0)
    }
}

/// Dense row-major predictor matrix; NaN marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_features: usize,
    names: Vec<String>,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let n_features = names.len();
        if n_features == 0 {
            return Err(Error::Config("feature matrix needs at least one feature".into()));
        }
        if data.len() % n_features != 0 {
            return Err(Error::Data(format!(
                "feature data of length {} is not a multiple of {n_features} features",
                data.len()
            )));
        }
        if data.iter().any(|v| v.is_infinite()) {
            return Err(Error::Data("infinite predictor value".into()));
        }
        Ok(Self { n_rows: data.len() / n_features, n_features, names, data })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = names.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::Data(format!("predictor row {i} has {} values, expected {p}", r.len())));
        }
        Self::new(names, rows.concat())
    }

    /// Generic names `x0, x1, ...`.
    pub fn unnamed(n_features: usize, data: Vec<f64>) -> Result<Self> {
        Self::new((0..n_features).map(|j| format!("x{j}")).collect(), data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_features..(r + 1) * self.n_features]
    }

    pub fn get(&self, r: usize, f: usize) -> f64 {
        self.data[r * self.n_features + f]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma_complexity: f64,
    pub min_child_hessian: f64,
    pub hessian_floor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 6,
            learning_rate: 0.05,
            lambda: 1.0,
            gamma_complexity: 0.0,
            min_child_hessian: 1.0,
            hessian_floor: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.max_depth > 32 {
            return Err(Error::Config(format!("max_depth must lie in [1, 32], got {}", self.max_depth)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("gamma_complexity", self.gamma_complexity),
            ("min_child_hessian", self.min_child_hessian),
            ("hessian_floor", self.hessian_floor),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}
