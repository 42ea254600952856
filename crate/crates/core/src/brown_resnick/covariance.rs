use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::spatial::{semivariogram, Grid, SemivariogramParams};

/// Covariance of the Gaussian field with semivariogram `gamma`, pinned to zero
/// at the reference site `r0`:
/// `Sigma*_ij = gamma(s_i, s_r0) + gamma(s_j, s_r0) - gamma(s_i, s_j)`.
///
/// Row and column `r0` vanish, so all factorizations work on the remaining
/// `D - 1` sites.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceModel {
    grid: Grid,
    params: SemivariogramParams,
    r0: usize,
    gamma_ref: Vec<f64>,
}

impl CovarianceModel {
    pub fn new(grid: &Grid, params: SemivariogramParams, r0: usize) -> Result<Self> {
        params.validate()?;
        if grid.len() < 2 {
            return Err(Error::Data("dependence models need at least two grid points".into()));
        }
        if r0 >= grid.len() {
            return Err(Error::Config(format!("reference point {r0} outside grid")));
        }
        let reference = grid.point(r0);
        let gamma_ref = grid.points().iter().map(|p| semivariogram(p, reference, &params)).collect();
        Ok(Self { grid: grid.clone(), params, r0, gamma_ref })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &SemivariogramParams {
        &self.params
    }

    pub fn reference(&self) -> usize {
        self.r0
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// `gamma(s_i, s_r0)` for every site.
    pub fn gamma_ref(&self) -> &[f64] {
        &self.gamma_ref
    }

    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        semivariogram(self.grid.point(i), self.grid.point(j), &self.params)
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == self.r0 || j == self.r0 {
            return 0.0;
        }
        if i == j {
            return 2.0 * self.gamma_ref[i];
        }
        self.gamma_ref[i] + self.gamma_ref[j] - self.gamma(i, j)
    }

    /// Full `D x D` matrix including the zero row/column of `r0`.
    pub fn dense(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let v = self.entry(i, j);
                m[i * d + j] = v;
                m[j * d + i] = v;
            }
        }
        m
    }

    /// Site ids other than `r0`, in increasing order.
    pub fn free_sites(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| i != self.r0).collect()
    }
}

/// Operations on the precision of the pinned covariance restricted to the
/// `D - 1` free sites. Vectors are indexed by grid id; the `r0` entry of an
/// input is ignored and that of an output is zero.
pub trait Precision: Sync {
    fn dim(&self) -> usize;
    fn reference(&self) -> usize;
    /// `Q x`.
    fn mul(&self, x: &[f64]) -> Vec<f64>;
    /// Diagonal of `Q`.
    fn diag(&self) -> Vec<f64>;
    /// `1^T Q 1`.
    fn total(&self) -> f64;
    /// `x^T Q x`.
    fn quad_form(&self, x: &[f64]) -> f64;
    /// `log det` of the covariance (not the precision).
    fn log_det_cov(&self) -> f64;
}

/// Exact dense factorization of the pinned covariance.
#[derive(Debug, Clone)]
pub struct DenseCovariance {
    model: CovarianceModel,
    free: Vec<usize>,
    chol: Cholesky,
    inverse: OnceLock<Vec<f64>>,
}

/// Build the pinned covariance and check positive definiteness. A failure
/// reports the offending leading minor, counted over the free sites.
pub fn build_covariance(grid: &Grid, params: SemivariogramParams, r0: usize) -> Result<DenseCovariance> {
    DenseCovariance::new(CovarianceModel::new(grid, params, r0)?)
}

impl DenseCovariance {
    pub fn new(model: CovarianceModel) -> Result<Self> {
        let free = model.free_sites();
        let m = free.len();
        let mut a = vec![0.0; m * m];
        for (p, &i) in free.iter().enumerate() {
            for (q, &j) in free.iter().enumerate().skip(p) {
                let v = model.entry(i, j);
                a[p * m + q] = v;
                a[q * m + p] = v;
            }
        }
        let chol = Cholesky::new(&a, m)?;
        Ok(Self { model, free, chol, inverse: OnceLock::new() })
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn free_sites(&self) -> &[usize] {
        &self.free
    }

    fn inverse(&self) -> &[f64] {
        self.inverse.get_or_init(|| self.chol.inverse())
    }

    fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| x[i]).collect()
    }

    fn scatter(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.model.dim()];
        for (p, &i) in self.free.iter().enumerate() {
            out[i] = v[p];
        }
        out
    }
}

impl Precision for DenseCovariance {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn reference(&self) -> usize {
        self.model.reference()
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.scatter(&self.chol.solve(&self.gather(x)))
    }

    fn diag(&self) -> Vec<f64> {
        let m = self.free.len();
        let inv = self.inverse();
        self.scatter(&(0..m).map(|p| inv[p * m + p]).collect::<Vec<_>>())
    }

    fn total(&self) -> f64 {
        self.inverse().iter().sum()
    }

    fn quad_form(&self, x: &[f64]) -> f64 {
        let mut v = self.gather(x);
        self.chol.solve_lower(&mut v);
        v.iter().map(|e| e * e).sum()
    }

    fn log_det_cov(&self) -> f64 {
        self.chol.log_det()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::Grid;

    #[test]
    fn two_point_covariance() {
        let g = Grid::from_xy(&[(0.0, 0.0), (2.0, 0.0)]).unwrap();
        let p = SemivariogramParams::new(1.0, 0.0, 0.0).unwrap();
        let c = CovarianceModel::new(&g, p, 0).unwrap();
        let g12 = 2.0;
        assert_eq!(c.dense(), vec![0.0, 0.0, 0.0, 2.0 * g12]);
    }

    #[test]
    fn vanishing_semivariogram_is_rejected() {
        let g = Grid::from_xy(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]).unwrap();
        let p = SemivariogramParams::new(1.0, 1000.0, 0.0).unwrap();
        match build_covariance(&g, p, 0) {
            Err(Error::NotPositiveDefinite { minor }) => assert_eq!(minor, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
