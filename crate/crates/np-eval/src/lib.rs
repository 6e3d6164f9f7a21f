//! Reconstruction-robustness scoring: min-error statistics, Gaussian fits of the φ laws,
//! Neyman–Pearson and cumulative ROC curves.

mod error;
mod roc;
mod special;
mod stats;

pub use error::{NpError, Result};
pub use roc::{
    cumulative_rates, format_significant, fpr_grid, log_density_ratio, np_rates, roc_analytic, roc_empirical,
    synthetic_samples, tpr_at_fpr, AnalyticRoc, ErrorSamples, RocCurve, RocPoint, RocSource, Test, FPR_GRID_MIN,
    FPR_GRID_POINTS, QUADRATURE_TOLERANCE, ROC_CSV_HEADER,
};
pub use special::{erf, erf_inv, erfc, erfc_inv};
pub use stats::{
    baseline_attack_monte_carlo, baseline_attack_tpr, class_average, fit_gaussian, min_error, phi_transform,
    softmin_loss, ErrorFn, FitReport, FIT_REPORT_SCHEMA, GaussianFit, RangeMse, LOGIT_CLAMP,
};
