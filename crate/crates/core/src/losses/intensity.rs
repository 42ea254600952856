//! Brown–Resnick exponent-measure intensity.
//!
//! With the field pinned at `r0`, the intensity is evaluated in reference
//! form. Writing `y_i = ln(x_i / x_r0) + gamma(s_i, s_r0)` for the free
//! sites and `Q` for the precision of the pinned covariance,
//!
//! `ln lambda(x) = -2 ln x_r0 - sum_{i != r0} ln x_i - y^T Q y / 2
//!                 - ((D - 1) ln(2 pi) + ln det Sigma~) / 2`.
//!
//! This equals the symmetric `D x D` formula of Wadsworth and Tawn (see
//! [`br_intensity_displayed`]) but needs only products with `Q`, so a Vecchia
//! factor can stand in for the dense inverse.

use crate::brown_resnick::{CovarianceModel, Precision};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// `ln lambda` with its gradient and the diagonal of its hessian in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityEval {
    pub log_lambda: f64,
    pub grad_log: Vec<f64>,
    pub hess_log_diag: Vec<f64>,
}

impl IntensityEval {
    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }

    /// `d lambda / d x_d`.
    pub fn dlambda(&self, d: usize) -> f64 {
        self.lambda() * self.grad_log[d]
    }

    /// `d^2 lambda / d x_d^2`.
    pub fn d2lambda(&self, d: usize) -> f64 {
        self.lambda() * (self.hess_log_diag[d] + self.grad_log[d].powi(2))
    }
}

fn check_positive(x: &[f64]) -> Result<()> {
    if let Some(i) = x.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Data(format!("intensity needs x > 0, got x[{i}] = {}", x[i])));
    }
    Ok(())
}

/// Intensity at `x` for the covariance in `model`; `prec` supplies the
/// precision (dense or Vecchia) and must be pinned at the same site.
pub fn br_intensity(x: &[f64], model: &CovarianceModel, prec: &dyn Precision) -> Result<IntensityEval> {
    let d = model.dim();
    if x.len() != d || prec.dim() != d {
        return Err(Error::Data(format!("intensity input of length {} for {d} sites", x.len())));
    }
    if prec.reference() != model.reference() {
        return Err(Error::Config("precision and covariance model use different reference sites".into()));
    }
    check_positive(x)?;
    let r0 = model.reference();
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let mut y: Vec<f64> = (0..d).map(|i| lx[i] - lx[r0] + model.gamma_ref()[i]).collect();
    y[r0] = 0.0;
    let v = prec.mul(&y);
    let quad: f64 = y.iter().zip(&v).map(|(a, b)| a * b).sum();
    let diag = prec.diag();
    let total = prec.total();
    let sum_v: f64 = v.iter().sum();
    let log_norm = 0.5 * ((d - 1) as f64 * (2.0 * std::f64::consts::PI).ln() + prec.log_det_cov());
    let sum_lx: f64 = lx.iter().sum();
    let log_lambda = -lx[r0] - sum_lx - 0.5 * quad - log_norm;

    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d];
    for i in 0..d {
        if i == r0 {
            grad[i] = (sum_v - 2.0) / x[i];
            hess[i] = (2.0 - sum_v - total) / (x[i] * x[i]);
        } else {
            grad[i] = -(1.0 + v[i]) / x[i];
            hess[i] = (1.0 + v[i] - diag[i]) / (x[i] * x[i]);
        }
    }
    Ok(IntensityEval { log_lambda, grad_log: grad, hess_log_diag: hess })
}

/// `ln lambda(x)` from the symmetric `D x D` formula with
/// `rho = Sigma^-1 1`, `Gamma = Sigma^-1 - rho rho^T / 1^T rho` and
/// `sigma = diag(Sigma)`. The pinned covariance is singular (row `r0` is
/// zero), so `Sigma = Sigma* + shift 1 1^T` is used; this is the covariance
/// of the same field plus an independent constant and leaves the intensity
/// unchanged for every `shift > 0`.
pub fn br_intensity_displayed(x: &[f64], model: &CovarianceModel, shift: f64) -> Result<f64> {
    let d = model.dim();
    if x.len() != d {
        return Err(Error::Data(format!("intensity input of length {} for {d} sites", x.len())));
    }
    if !(shift > 0.0) {
        return Err(Error::Config("covariance shift must be positive".into()));
    }
    check_positive(x)?;
    let mut sigma_m = model.dense();
    sigma_m.iter_mut().for_each(|v| *v += shift);
    let chol = Cholesky::new(&sigma_m, d)?;
    let ones = vec![1.0; d];
    let rho = chol.solve(&ones);
    let one_rho: f64 = rho.iter().sum();
    let sigma: Vec<f64> = (0..d).map(|i| sigma_m[i * d + i]).collect();
    let q_sigma = chol.solve(&sigma);
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let q_lx = chol.solve(&lx);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let lx_rho = dot(&lx, &rho);
    let sigma_rho = dot(&sigma, &rho);
    let lx_gamma_lx = dot(&lx, &q_lx) - lx_rho * lx_rho / one_rho;
    let linear = 2.0 * lx_rho / one_rho + dot(&lx, &q_sigma) - lx_rho * sigma_rho / one_rho;
    let constant =
        0.25 * dot(&sigma, &q_sigma) - 0.25 * sigma_rho * sigma_rho / one_rho + sigma_rho / one_rho - 1.0 / one_rho;
    Ok(-0.5 * chol.log_det()
        - 0.5 * one_rho.ln()
        - 0.5 * (d - 1) as f64 * (2.0 * std::f64::consts::PI).ln()
        - lx.iter().sum::<f64>()
        - 0.5 * (lx_gamma_lx + linear)
        - 0.5 * constant)
}
