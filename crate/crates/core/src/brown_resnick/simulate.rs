//! Rejection sampling of generalized r-Pareto fields with Brown–Resnick
//! dependence, and Monte Carlo pairwise conditional exceedance probabilities.
//!
//! A standard Pareto process with mean-one spectral functions is drawn as
//! `Z = kappa * R * W`: `R` is unit Pareto, and `W = W~ / mean(W~)` with
//! `W~(s) = exp{eps(s) - eps(s_J) - gamma(s, s_J)}`, `J` uniform on the grid
//! and `eps` the Gaussian field pinned at `r0`. Each `Z` is mapped to the data
//! scale by `y_d = b_d + a_d (z_d^xi - 1) / xi` and kept iff `r(y) >= u`.
//! Since `(z^xi - 1)/xi <= z - 1`, every accepted field has
//! `mean(Z) >= kappa = 1 / (D max_d pi_d)`, with `pi_d` proportional to
//! `w_d a_d`, so the restriction to `R >= 1` loses nothing.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::covariance::{CovarianceModel, DenseCovariance};
use crate::error::{Error, Result};
use crate::risk::RiskFunctional;
use crate::spatial::{maximin_ordering, Grid, SemivariogramParams};
use crate::stats::{quantile_type7, stream_rng};

const MIN_ACCEPTANCE: f64 = 1e-4;
const MIN_PROPOSALS_BEFORE_ABORT: usize = 20_000;

/// Everything needed to simulate one day's r-exceedance fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrpSpec {
    pub grid: Grid,
    pub params: SemivariogramParams,
    /// Data-scale GPD scale `a_d > 0`.
    pub scale: Vec<f64>,
    /// Marginal thresholds `b_d`.
    pub b: Vec<f64>,
    pub xi: f64,
    pub risk: RiskFunctional,
    pub u: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub fields: Vec<Vec<f64>>,
    pub proposals: usize,
}

impl Simulation {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            return f64::NAN;
        }
        self.fields.len() as f64 / self.proposals as f64
    }
}

/// Data-scale map `b + a (z^xi - 1)/xi` (log for `xi = 0`).
pub fn pareto_to_data(z: f64, scale: f64, b: f64, xi: f64) -> f64 {
    if xi == 0.0 {
        b + scale * z.ln()
    } else {
        b + scale * (z.powf(xi) - 1.0) / xi
    }
}

struct Sampler<'a> {
    spec: &'a GrpSpec,
    chol: DenseCovariance,
    gamma: Vec<f64>,
    kappa: f64,
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a GrpSpec) -> Result<Self> {
        let d = spec.grid.len();
        if spec.scale.len() != d || spec.b.len() != d || spec.risk.dim() != d {
            return Err(Error::Config("scale, threshold and risk weights must match the grid".into()));
        }
        if spec.scale.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::Numeric("GPD scale must be positive and finite at every point".into()));
        }
        if !spec.xi.is_finite() || spec.xi > 1.0 {
            return Err(Error::Config(format!("simulation needs xi <= 1, got {}", spec.xi)));
        }
        let rb = spec.risk.apply(&spec.b);
        if spec.u < rb - 1e-9 * (1.0 + rb.abs()) {
            return Err(Error::Config(format!("risk threshold u = {} lies below r(b) = {rb}", spec.u)));
        }
        let r0 = maximin_ordering(&spec.grid)?.permutation[0];
        let model = CovarianceModel::new(&spec.grid, spec.params, r0)?;
        let mut gamma = vec![0.0; d * d];
        for i in 0..d {
            for j in (i + 1)..d {
                let g = model.gamma(i, j);
                gamma[i * d + j] = g;
                gamma[j * d + i] = g;
            }
        }
        let chol = DenseCovariance::new(model)?;
        let w = spec.risk.weights();
        let total: f64 = w.iter().zip(&spec.scale).map(|(w, a)| w * a).sum();
        let pi_max = w.iter().zip(&spec.scale).map(|(w, a)| w * a / total).fold(0.0, f64::max);
        Ok(Self { spec, chol, gamma, kappa: 1.0 / (d as f64 * pi_max) })
    }

    /// Proposal `index`, returned only if it is an r-exceedance.
    fn propose(&self, seed: u64, index: u64) -> Option<Vec<f64>> {
        let spec = self.spec;
        let d = spec.grid.len();
        let mut rng = stream_rng(seed, index);
        let j = rng.random_range(0..d);
        let free = self.chol.free_sites();
        let normals: Vec<f64> = (0..free.len()).map(|_| rng.sample(StandardNormal)).collect();
        let r = 1.0 / (1.0 - rng.random::<f64>());
        let corr = self.chol.cholesky().mul_lower(&normals);
        let mut eps = vec![0.0; d];
        for (&site, v) in free.iter().zip(corr) {
            eps[site] = v;
        }
        let mut w: Vec<f64> = (0..d).map(|s| (eps[s] - eps[j] - self.gamma[s * d + j]).exp()).collect();
        let mean = w.iter().sum::<f64>() / d as f64;
        let factor = self.kappa * r / mean;
        w.iter_mut().for_each(|v| *v *= factor);
        let y: Vec<f64> = (0..d).map(|s| pareto_to_data(w[s], spec.scale[s], spec.b[s], spec.xi)).collect();
        (spec.risk.apply(&y) >= spec.u).then_some(y)
    }
}

/// Draw exactly `n_sims` r-exceedance fields. Proposal `i` uses its own
/// random stream, so the result does not depend on the thread count.
pub fn simulate_grp(spec: &GrpSpec, n_sims: usize, seed: u64) -> Result<Simulation> {
    if n_sims == 0 {
        return Ok(Simulation { fields: Vec::new(), proposals: 0 });
    }
    let sampler = Sampler::new(spec)?;
    let mut fields = Vec::with_capacity(n_sims);
    let mut next = 0u64;
    let batch = (4 * n_sims).clamp(1024, 1 << 16) as u64;
    loop {
        let drawn: Vec<Option<Vec<f64>>> =
            (next..next + batch).into_par_iter().map(|i| sampler.propose(seed, i)).collect();
        for (offset, y) in drawn.into_iter().enumerate() {
            if let Some(y) = y {
                fields.push(y);
                if fields.len() == n_sims {
                    return Ok(Simulation { fields, proposals: (next + offset as u64 + 1) as usize });
                }
            }
        }
        next += batch;
        let proposals = next as usize;
        if proposals >= MIN_PROPOSALS_BEFORE_ABORT && (fields.len() as f64) < MIN_ACCEPTANCE * proposals as f64 {
            return Err(Error::Numeric(format!(
                "r-exceedance acceptance rate {:.2e} after {proposals} proposals is below {MIN_ACCEPTANCE:e}; \
                 the risk threshold is too extreme for these parameters",
                fields.len() as f64 / proposals as f64
            )));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub n_conditioning: usize,
}

/// Empirical `Pr(Y_2 > u_2 | Y_1 > u_1)` where `u_i` is the type-7
/// `q`-quantile of site `i` over the supplied fields.
pub fn pairwise_cond_prob_from(fields: &[Vec<f64>], s1: usize, s2: usize, q: f64) -> Result<PairwiseEstimate> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("q must lie in (0, 1), got {q}")));
    }
    let col = |s: usize| fields.iter().map(|f| f[s]).collect::<Vec<f64>>();
    let c1 = col(s1);
    let u1 = quantile_type7(&c1, q);
    let n1 = c1.iter().filter(|&&v| v > u1).count();
    if n1 == 0 {
        return Err(Error::Numeric(format!("no exceedances of the {q}-quantile at site {s1}")));
    }
    if s1 == s2 {
        return Ok(PairwiseEstimate { probability: 1.0, std_error: 0.0, n_conditioning: n1 });
    }
    let c2 = col(s2);
    let u2 = quantile_type7(&c2, q);
    let both = c1.iter().zip(&c2).filter(|(a, b)| **a > u1 && **b > u2).count();
    let p = both as f64 / n1 as f64;
    Ok(PairwiseEstimate { probability: p, std_error: (p * (1.0 - p) / n1 as f64).sqrt(), n_conditioning: n1 })
}

/// Simulate `n_sims` fields and estimate the pairwise conditional
/// exceedance probability of `s2` given `s1` at level `q`.
pub fn pairwise_cond_prob(
    spec: &GrpSpec,
    s1: usize,
    s2: usize,
    q: f64,
    n_sims: usize,
    seed: u64,
) -> Result<PairwiseEstimate> {
    let d = spec.grid.len();
    if s1 >= d || s2 >= d {
        return Err(Error::Config(format!("pair ({s1}, {s2}) outside grid of size {d}")));
    }
    let sim = simulate_grp(spec, n_sims, seed)?;
    pairwise_cond_prob_from(&sim.fields, s1, s2, q)
}
