//! Tuning-parameter selection and bootstrap stability of estimated edges.

mod cv;
mod folds;
mod stability;

pub use cv::{
    cv_select, log_spaced, penalty_scales, validation_select, validation_select_separately,
    CvReport, FoldDiagnostic, TuningGrid, ValidationSelection,
};
pub use folds::{make_folds, split_rows};
pub use stability::{
    bootstrap_stability, DistinctStability, PopulationStability, SharedStability,
    StabilityReport, STABLE_FRACTION,
};
