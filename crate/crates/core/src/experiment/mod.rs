//! Desk-scale experiment plans: baseline training, preference rounds and
//! the directional checks on quality, transfer, training fit and feature use.

mod baseline;
mod plan;
mod suite;

pub use baseline::{dev_loss, run_baseline, supervised_pairs, BaselineEpoch, BaselineOutcome};
pub use plan::{BaselineConfig, ExperimentPlan, PLAN_VERSION};
pub use suite::{
    dev_metric_key, dev_quality, prepare_data, required_passes, run_observation_suite, run_seed,
    GroupRow, LangRow, Observation, ObservationResult, ObservationSummary, RoundPoint, SeedData,
    SeedReport, SignificanceRow, Status, SuiteReport,
};
