//! Verification metrics, diagnostics, explanations and the recovery study.

pub mod export;
mod extremogram;
mod metrics;
mod qq;
mod shap;
mod study;

pub use extremogram::{bin_by_distance, extremogram, DistanceBin, ExtremogramPair, MIN_EXTREMOGRAM_DAYS};
pub use metrics::{brier, compare_brier, permutation_test, roc_auc, Roc, RocPoint, ScoreReport};
pub use qq::{qq_tail, QqPoint, QqTable, MIN_QQ_EXCESSES};
pub use shap::{region_shap_summary, tree_expectation, tree_shap, tree_shap_single, ShapAttribution};
pub use study::{simulation_study, BoxStats, StudyCell, StudyConfig, StudyReport};
