use crate::boosting::LossAdapter;
use crate::error::{Error, Result};
use crate::stats::ilogit;

/// Negative Bernoulli log-likelihood in the logit `theta`:
/// returns `(loss, g, h)` with `g = p - y` and `h = p (1 - p)`.
pub fn logloss_grad_hess(label: f64, theta: f64) -> (f64, f64, f64) {
    // log(1 + e^theta) without overflow
    let softplus = theta.max(0.0) + (-theta.abs()).exp().ln_1p();
    let p = ilogit(theta);
    (softplus - label * theta, p - label, p * (1.0 - p))
}

/// Occurrence loss; one row per day.
#[derive(Debug, Clone)]
pub struct LogLoss {
    labels: Vec<f64>,
}

impl LogLoss {
    pub fn new(labels: Vec<f64>) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Data(format!("occurrence label at row {i} is {}, expected 0 or 1", labels[i])));
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }
}

impl LossAdapter for LogLoss {
    fn n_rows(&self) -> usize {
        self.labels.len()
    }

    fn loss(&self, row: usize, pred: f64) -> f64 {
        logloss_grad_hess(self.labels[row], pred).0
    }

    fn grad_hess(&self, row: usize, pred: f64) -> (f64, f64) {
        let (_, g, h) = logloss_grad_hess(self.labels[row], pred);
        (g, h)
    }
}
