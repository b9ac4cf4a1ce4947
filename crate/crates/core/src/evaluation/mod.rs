//! Metrics, LOSO orchestration and aggregation.

mod loso;
mod metrics;

pub use loso::{
    aggregate, compare_discriminators, loso_jobs, run_job, run_jobs, run_loso, AggregateReport, DiscriminatorRow,
    FoldResult, FoldScore, FoldShift, Job, LosoConfig, LosoOutcome, MeanStd,
};
pub use metrics::{evaluate, metrics_from_predictions, Metrics};
