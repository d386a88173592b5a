//! Posterior prediction at held-out sites and study metrics.

mod coverage;
mod metrics;
mod predict;

pub use coverage::{
    coverage_study, tabulate_coverage, CoverageFailure, CoverageRecord, CoverageRow, CoverageTable, MIN_REPLICATES,
};
pub use metrics::{cvmspe, misclassification, mpr};
pub use predict::{parameter_summaries, predict, ParameterSummary, PredictionSummary};
