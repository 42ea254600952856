//! Loss adapters for the three sub-models: occurrence log-loss, GPD
//! intensity loss and the Brown–Resnick gradient score.

mod gpd;
mod intensity;
mod logloss;
mod score;

pub use gpd::{
    gpd_loss_grad_hess, gpd_mle, standardizing_scale, transform_to_z, GpdFit, GpdLoss, GpdMethod, GpdRow,
    ScaleConvention, MIN_MLE_EXCESSES,
};
pub use intensity::{br_intensity, br_intensity_displayed, IntensityEval};
pub use logloss::{logloss_grad_hess, LogLoss};
pub use score::{
    build_precision, gradient_score_direct, grp_gradient_score, prefit_dependence, GrpScoreLoss, PrecisionMethod,
    PrefitResult, ScoreSetup,
};
