//! Quantile-distribution mathematics: risk distortion, quantile-Huber
//! regression, sampled TD errors, the piecewise-linear CDF and TDL.
//!
//! Everything here is a pure function of its inputs.

mod cdf;
mod distortion;
mod loss;
mod normal;

pub use cdf::{
    break_ties, build_cdf, interval_mass, mean_q, proximity_edges, tdl, tdl_with_cdf, PiecewiseCdf,
    QuantilePair, QuantileSampleSet, TdlBoundary, TdlOptions, TIE_EPSILON,
};
pub use distortion::{distort, CvnarForm, DistortionKind, DistortionOperator};
pub use loss::{huber, iqn_loss, quantile_huber, quantile_huber_grad, td_error_matrix, TdErrorMatrix};
pub use normal::{std_normal_cdf, std_normal_quantile};
