//! Generalized Pareto intensity loss, location-wise maximum likelihood and
//! the transform of data to the standard Pareto scale.

use serde::{Deserialize, Serialize};

use crate::boosting::LossAdapter;
use crate::error::{Error, Result};

/// Loss of one excess `e = y - b > 0` under a GPD with scale
/// `a = exp(theta) - m xi` and shape `xi`, with derivatives in `theta`.
///
/// `loss = ln a + ((xi + 1)/xi) ln(1 + xi e / a)`; for `y <= b` the row
/// contributes `(0, 0, 0)`.
pub fn gpd_loss_grad_hess(y: f64, b: f64, m: f64, xi: f64, theta: f64) -> Result<(f64, f64, f64)> {
    let e = y - b;
    if !(e > 0.0) {
        return Ok((0.0, 0.0, 0.0));
    }
    let big_e = theta.exp();
    let a = big_e - m * xi;
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Numeric(format!("GPD scale exp(theta) - m xi = {a} is not positive (theta = {theta})")));
    }
    let ea = big_e / a;
    let ea2 = ea * ea;
    if xi == 0.0 {
        let r = e / a;
        return Ok((a.ln() + r, ea - r * ea, ea - ea2 - r * (ea - 2.0 * ea2)));
    }
    let c = xi * e;
    let ac = a + c;
    if !(ac > 0.0) {
        return Err(Error::Numeric(format!("GPD support violated: 1 + xi (y - b) / a = {} <= 0", ac / a)));
    }
    let kappa = (xi + 1.0) / xi;
    let eac = big_e / ac;
    let loss = a.ln() + kappa * (c / a).ln_1p();
    let g = ea + kappa * (eac - ea);
    let h = (ea - ea2) + kappa * ((eac - eac * eac) - (ea - ea2));
    Ok((loss, g, h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdRow {
    pub y: f64,
    pub b: f64,
    pub m: f64,
    /// Cross-validation unit (the day).
    pub group: usize,
}

/// Intensity loss over (grid point, day) rows with a fixed shape `xi`.
/// Outside the support the loss is `+inf` and the derivatives NaN.
#[derive(Debug, Clone)]
pub struct GpdLoss {
    pub rows: Vec<GpdRow>,
    pub xi: f64,
}

impl LossAdapter for GpdLoss {
    fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn loss(&self, row: usize, pred: f64) -> f64 {
        let r = &self.rows[row];
        gpd_loss_grad_hess(r.y, r.b, r.m, self.xi, pred).map_or(f64::INFINITY, |v| v.0)
    }

    fn grad_hess(&self, row: usize, pred: f64) -> (f64, f64) {
        let r = &self.rows[row];
        gpd_loss_grad_hess(r.y, r.b, r.m, self.xi, pred).map_or((f64::NAN, f64::NAN), |v| (v.1, v.2))
    }

    fn group(&self, row: usize) -> usize {
        self.rows[row].group
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpdMethod {
    MaximumLikelihood,
    /// Fewer than 10 excesses: probability-weighted moments only.
    ProbabilityWeightedMoments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub sigma: f64,
    pub xi: f64,
    pub n: usize,
    pub method: GpdMethod,
    /// Euclidean norm of the log-likelihood gradient at the estimate.
    pub grad_norm: f64,
}

const XI_BOUND: f64 = 1.0 - 1e-9;
pub const MIN_MLE_EXCESSES: usize = 10;

/// GPD log-likelihood with gradient and hessian in `(sigma, xi)`.
fn gpd_loglik(x: &[f64], sigma: f64, xi: f64) -> Option<(f64, [f64; 2], [[f64; 2]; 2])> {
    if !(sigma > 0.0) {
        return None;
    }
    let n = x.len() as f64;
    let (mut sum_log, mut a, mut b2) = (0.0, 0.0, 0.0);
    for &xi_ in x {
        let z = 1.0 + xi * xi_ / sigma;
        if !(z > 0.0) {
            return None;
        }
        sum_log += z.ln();
        a += xi_ / z;
        b2 += (xi_ / z).powi(2);
    }
    if xi.abs() < 1e-7 {
        // exponential limit, expanded to second order in xi
        let s1: f64 = x.iter().sum::<f64>() / sigma;
        let s2: f64 = x.iter().map(|v| (v / sigma).powi(2)).sum();
        let s3: f64 = x.iter().map(|v| (v / sigma).powi(3)).sum();
        let ll = -n * sigma.ln() - s1 + xi * (0.5 * s2 - s1);
        let g_sigma = -n / sigma + s1 / sigma + xi * (s1 - s2) / sigma;
        let g_xi = 0.5 * s2 - s1 + xi * (s2 - 2.0 * s3 / 3.0);
        let h_ss = n / sigma.powi(2) - 2.0 * s1 / sigma.powi(2);
        let h_sx = (s1 - s2) / sigma;
        let h_xx = s2 - 2.0 * s3 / 3.0;
        return Some((ll, [g_sigma, g_xi], [[h_ss, h_sx], [h_sx, h_xx]]));
    }
    let ll = -n * sigma.ln() - (1.0 + 1.0 / xi) * sum_log;
    let g_sigma = -n / sigma + (1.0 + xi) * a / sigma.powi(2);
    let g_xi = sum_log / xi.powi(2) - (1.0 + 1.0 / xi) * a / sigma;
    let h_ss = n / sigma.powi(2) - 2.0 * (1.0 + xi) * a / sigma.powi(3) + (1.0 + xi) * xi * b2 / sigma.powi(4);
    let h_sx = a / sigma.powi(2) - (1.0 + xi) * b2 / sigma.powi(3);
    let h_xx = -2.0 * sum_log / xi.powi(3) + 2.0 * a / (xi.powi(2) * sigma) + (1.0 + 1.0 / xi) * b2 / sigma.powi(2);
    Some((ll, [g_sigma, g_xi], [[h_ss, h_sx], [h_sx, h_xx]]))
}

/// Probability-weighted-moment estimates (plotting positions `(i - 0.35)/n`).
fn gpd_pwm(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len() as f64;
    let a0 = sorted.iter().sum::<f64>() / n;
    let a1 = sorted.iter().enumerate().map(|(i, x)| (1.0 - (i as f64 + 1.0 - 0.35) / n) * x).sum::<f64>() / n;
    let k = a0 / (a0 - 2.0 * a1) - 2.0;
    let sigma = 2.0 * a0 * a1 / (a0 - 2.0 * a1);
    let xi = (-k).clamp(-XI_BOUND, XI_BOUND);
    if sigma > 0.0 && sigma.is_finite() {
        (sigma, xi)
    } else {
        (a0, 0.0)
    }
}

/// Maximum likelihood GPD fit of positive excesses with `xi` restricted to
/// `(-1, 1)`: a profile search over `tau = xi / sigma` followed by Newton
/// polishing in `(sigma, xi)`.
pub fn gpd_mle(excesses: &[f64]) -> Result<GpdFit> {
    if excesses.is_empty() {
        return Err(Error::Data("GPD fit needs at least one excess".into()));
    }
    if let Some(v) = excesses.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Data(format!("GPD excesses must be positive and finite, got {v}")));
    }
    let mut sorted = excesses.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::Data(format!("degenerate GPD sample: all {} excesses equal {}", sorted.len(), sorted[0])));
    }
    let n = sorted.len();
    if n < MIN_MLE_EXCESSES {
        let (sigma, xi) = gpd_pwm(&sorted);
        return Ok(GpdFit { sigma, xi, n, method: GpdMethod::ProbabilityWeightedMoments, grad_norm: f64::NAN });
    }
    let x = &sorted;
    let xmax = x[n - 1];
    let xbar = x.iter().sum::<f64>() / n as f64;
    let xi_of = |tau: f64| x.iter().map(|v| (tau * v).ln_1p()).sum::<f64>() / n as f64;
    // profile log-likelihood per observation, -inf outside |xi| < 1
    let profile = |tau: f64| -> f64 {
        if (tau * xmax).abs() < 1e-12 {
            return -(xbar.ln() + 1.0);
        }
        if tau * xmax <= -1.0 {
            return f64::NEG_INFINITY;
        }
        let xi = xi_of(tau);
        let sigma = xi / tau;
        if !(xi.abs() < XI_BOUND) || !(sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        -(sigma.ln() + xi + 1.0)
    };
    let mut taus = vec![0.0];
    for i in 1..=200 {
        let s = 30.0 * i as f64 / 200.0;
        taus.push(-(1.0 - (-s).exp()) / xmax);
        let s = 14.0 * i as f64 / 200.0;
        taus.push(s.exp_m1() / xmax);
    }
    taus.sort_by(f64::total_cmp);
    let vals: Vec<f64> = taus.iter().map(|&t| profile(t)).collect();
    let best = (0..taus.len()).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
    let (mut lo, mut hi) = (taus[best.saturating_sub(1)], taus[(best + 1).min(taus.len() - 1)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        if hi - lo <= 1e-14 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        let c = hi - phi * (hi - lo);
        let d = lo + phi * (hi - lo);
        if profile(c) >= profile(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    let tau = 0.5 * (lo + hi);
    let (mut sigma, mut xi) = if (tau * xmax).abs() < 1e-12 {
        (xbar, 0.0)
    } else {
        let xi = xi_of(tau);
        (xi / tau, xi)
    };
    let (mut ll, mut grad, mut hess) =
        gpd_loglik(x, sigma, xi).ok_or_else(|| Error::Numeric("GPD profile search left the support".into()))?;
    for _ in 0..100 {
        if grad[0].hypot(grad[1]) <= 1e-6 {
            break;
        }
        let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
        let (ds, dx) = if det.abs() > 0.0 && hess[0][0] < 0.0 && det > 0.0 {
            (
                -(hess[1][1] * grad[0] - hess[0][1] * grad[1]) / det,
                -(-hess[1][0] * grad[0] + hess[0][0] * grad[1]) / det,
            )
        } else {
            (grad[0] * 1e-3 * sigma, grad[1] * 1e-3)
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let (s_new, x_new) = (sigma + t * ds, xi + t * dx);
            if x_new.abs() < XI_BOUND {
                if let Some((l, g, h)) = gpd_loglik(x, s_new, x_new) {
                    if l >= ll - 1e-12 * ll.abs() {
                        sigma = s_new;
                        xi = x_new;
                        ll = l;
                        grad = g;
                        hess = h;
                        moved = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let grad_norm = grad[0].hypot(grad[1]);
    if grad_norm > 1e-6 {
        log::warn!("GPD fit of {n} excesses stopped with gradient norm {grad_norm:e} (xi = {xi})");
    }
    Ok(GpdFit { sigma, xi, n, method: GpdMethod::MaximumLikelihood, grad_norm })
}

/// Which scale divides the excess in [`transform_to_z`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleConvention {
    /// `exp(theta_int)`.
    #[default]
    Exponential,
    /// The GPD scale `exp(theta_int) - m xi`.
    GpdScale,
}

/// Scale used to standardize excesses at one point.
pub fn standardizing_scale(theta_int: f64, m: f64, xi: f64, convention: ScaleConvention) -> f64 {
    match convention {
        ScaleConvention::Exponential => theta_int.exp(),
        ScaleConvention::GpdScale => theta_int.exp() - m * xi,
    }
}

/// `z_d = {1 + xi (y_d - b_d) / s_d}_+^{1/xi}`, with `z_d = 0` wherever the
/// bracket is not positive.
pub fn transform_to_z(
    y: &[f64],
    b: &[f64],
    theta_int: &[f64],
    m: &[f64],
    xi: f64,
    convention: ScaleConvention,
) -> Result<Vec<f64>> {
    if xi == 0.0 || !xi.is_finite() {
        return Err(Error::Config(format!("transform_to_z needs a finite nonzero xi, got {xi}")));
    }
    let d = y.len();
    if b.len() != d || theta_int.len() != d || m.len() != d {
        return Err(Error::Data("transform_to_z inputs differ in length".into()));
    }
    (0..d)
        .map(|i| {
            let s = standardizing_scale(theta_int[i], m[i], xi, convention);
            if !(s > 0.0) {
                return Err(Error::Numeric(format!("non-positive scale {s} at grid point {i}")));
            }
            let bracket = 1.0 + xi * (y[i] - b[i]) / s;
            Ok(if bracket > 0.0 { bracket.powf(1.0 / xi) } else { 0.0 })
        })
        .collect()
}
