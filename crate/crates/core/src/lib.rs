//! Stability selection for sparse linear regression, with an overall
//! stability score per regularization value.
//!
//! The pipeline: draw B half-size subsamples, fit the Lasso on each across a
//! regularization grid, and record which variables were selected. The
//! agreement of those selections yields a stability value per grid point;
//! the smallest regularization value in the excellent band (or a
//! one-standard-deviation fallback) then drives variable selection,
//! calibration of the per-family error rate, and a stability/accuracy
//! Pareto analysis. Convergence traces over successive subsamples show how
//! many subsamples the estimate actually needed.
//!
//! Everything is deterministic: all randomness derives from a master seed
//! plus stream tags, so results are identical for any thread count.

pub mod data;
pub mod error;
pub mod lasso;
pub mod resampling;
pub mod rng;
pub mod selection;
pub mod stability;

pub use data::{
    load_csv, save_csv, simulate, simulate_ar1_samples, standardize, Dataset, ResponseColumn,
    Standardization, SyntheticSpec,
};
pub use error::{Error, Result};
pub use lasso::{
    cross_validate, default_grid_ratio, fit_lasso, fit_lasso_path, kkt_violation, lambda_max,
    make_grid, CvResult, GridSource, LambdaGrid, LassoFit,
};
pub use resampling::{
    average_selected, evaluate_mse, run_stability_selection, run_stability_selection_with,
    selection_frequencies, AccuracyCurve, FitRecord, RunDiagnostics, RunOptions,
    SelectionFrequencies, SelectionMatrix, StabilityRun,
};
pub use selection::{
    calibrate_pfer, check_corollary1, mb_stable_set, pareto_analysis, stable_stability_set,
    CalibrationMode, CalibrationResult, CalibrationTarget, Corollary1Check, ParetoAnalysis,
    ParetoPoint, SelectionRule, StableMember, StableSet,
};
pub use stability::{
    convergence_trace, estimate_stability, estimate_stability_with_ci, find_lambda_stable,
    find_lambda_stable_1sd, stability_curve, suggest_cutoff, ChoiceKind, ConvergenceTrace,
    LambdaChoice, StabilityBand, StabilityReport,
};
