//! Vecchia approximation of the pinned covariance: every free site is
//! regressed on at most `k` previously ordered neighbours, giving a sparse
//! unit-triangular `B` and diagonal `D` with `Q ~= B^T D^-1 B`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::covariance::{CovarianceModel, Precision};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::spatial::{maximin_ordering, neighbor_sets, Ordering};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VecchiaRow {
    pub site: usize,
    pub neighbors: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub conditional_variance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VecchiaFactor {
    dim: usize,
    r0: usize,
    rows: Vec<VecchiaRow>,
}

/// Maximin ordering and `k` nearest-previous neighbours (anisotropic in the
/// model's `theta_scale`), then the factor.
pub fn vecchia_factorize(model: &CovarianceModel, k: usize) -> Result<VecchiaFactor> {
    if k == 0 {
        return Err(Error::Config("Vecchia needs k >= 1".into()));
    }
    let ordering = maximin_ordering(model.grid())?;
    let ordering = neighbor_sets(&ordering, model.grid(), k, model.params().theta_scale);
    VecchiaFactor::new(model, &ordering)
}

impl VecchiaFactor {
    /// Factor for an ordering whose neighbour sets are already filled. The
    /// reference site is skipped wherever it appears.
    pub fn new(model: &CovarianceModel, ordering: &Ordering) -> Result<Self> {
        let r0 = model.reference();
        let jobs: Vec<(usize, Vec<usize>)> = ordering
            .permutation
            .iter()
            .zip(&ordering.neighbor_sets)
            .filter(|(&site, _)| site != r0)
            .map(|(&site, nb)| (site, nb.iter().copied().filter(|&n| n != r0).collect()))
            .collect();
        let rows = jobs
            .into_par_iter()
            .map(|(site, neighbors)| regress(model, site, neighbors))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim: model.dim(), r0, rows })
    }

    pub fn rows(&self) -> &[VecchiaRow] {
        &self.rows
    }

    /// Factor of the covariance multiplied by `c > 0`: coefficients are
    /// unchanged, conditional variances scale by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| VecchiaRow { conditional_variance: r.conditional_variance * c, ..r.clone() })
            .collect();
        Self { dim: self.dim, r0: self.r0, rows }
    }

    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| x[r.site] - r.neighbors.iter().zip(&r.coefficients).map(|(&n, b)| b * x[n]).sum::<f64>())
            .collect()
    }
}

fn regress(model: &CovarianceModel, site: usize, neighbors: Vec<usize>) -> Result<VecchiaRow> {
    let m = neighbors.len();
    let var = model.entry(site, site);
    if m == 0 {
        if !(var > 0.0) {
            return Err(Error::Numeric(format!("non-positive conditional variance at site {site}")));
        }
        return Ok(VecchiaRow { site, neighbors, coefficients: Vec::new(), conditional_variance: var });
    }
    let mut a = vec![0.0; m * m];
    for p in 0..m {
        for q in p..m {
            let v = model.entry(neighbors[p], neighbors[q]);
            a[p * m + q] = v;
            a[q * m + p] = v;
        }
    }
    let cross: Vec<f64> = neighbors.iter().map(|&n| model.entry(n, site)).collect();
    let chol = Cholesky::new(&a, m)
        .map_err(|_| Error::Numeric(format!("neighbour covariance of site {site} is not positive definite")))?;
    let coefficients = chol.solve(&cross);
    let cond = var - cross.iter().zip(&coefficients).map(|(c, b)| c * b).sum::<f64>();
    if !(cond > 0.0) {
        return Err(Error::Numeric(format!("non-positive conditional variance {cond:e} at site {site}")));
    }
    Ok(VecchiaRow { site, neighbors, coefficients, conditional_variance: cond })
}

impl Precision for VecchiaFactor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn reference(&self) -> usize {
        self.r0
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let e = self.residuals(x);
        let mut out = vec![0.0; self.dim];
        for (r, ei) in self.rows.iter().zip(e) {
            let w = ei / r.conditional_variance;
            out[r.site] += w;
            for (&n, b) in r.neighbors.iter().zip(&r.coefficients) {
                out[n] -= b * w;
            }
        }
        out
    }

    fn diag(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for r in &self.rows {
            let inv = 1.0 / r.conditional_variance;
            out[r.site] += inv;
            for (&n, b) in r.neighbors.iter().zip(&r.coefficients) {
                out[n] += b * b * inv;
            }
        }
        out
    }

    fn total(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let s = 1.0 - r.coefficients.iter().sum::<f64>();
                s * s / r.conditional_variance
            })
            .sum()
    }

    fn quad_form(&self, x: &[f64]) -> f64 {
        self.residuals(x).iter().zip(&self.rows).map(|(e, r)| e * e / r.conditional_variance).sum()
    }

    fn log_det_cov(&self) -> f64 {
        self.rows.iter().map(|r| r.conditional_variance.ln()).sum()
    }
}
