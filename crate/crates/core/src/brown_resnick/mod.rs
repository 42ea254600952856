//! Brown–Resnick dependence: pinned covariance, Vecchia sparsification and
//! generalized r-Pareto simulation.

mod covariance;
mod simulate;
mod vecchia;

pub use covariance::{build_covariance, CovarianceModel, DenseCovariance, Precision};
pub use simulate::{
    pairwise_cond_prob, pairwise_cond_prob_from, pareto_to_data, simulate_grp, GrpSpec, PairwiseEstimate, Simulation,
};
pub use vecchia::{vecchia_factorize, VecchiaFactor, VecchiaRow};
