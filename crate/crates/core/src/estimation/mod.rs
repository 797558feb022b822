//! Robust M-estimation: trimmed-LS start, IRLS at fixed `(r, d)`, profile
//! search, sandwich covariance and outlier weights.

pub mod config;
pub mod irls;
pub mod outliers;
pub mod profile;
pub mod sandwich;

pub use config::{
    Convergence, FitConfig, FitResult, HessianMode, InnerSolver, IrlsPass, ProfileEntry, Sandwich, StartStrategy,
    ThresholdGrid,
};
pub use irls::{fit_fixed_threshold, initial_estimate, FixedFit};
pub use outliers::{robust_outlier_weights, OutlierWeights};
pub use profile::{profile_argmin, profile_search, threshold_candidates};
pub use sandwich::{model_selection_criterion, penalty_trace, sandwich_covariance, MAX_CONDITION};
