//! Generalized r-Pareto models for spatially compounding extremes, fitted by
//! second-order gradient tree boosting with extreme-value losses.

pub mod boosting;
pub mod brown_resnick;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod pipeline;
pub mod risk;
pub mod spatial;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
