//! Accuracy metrics and the repeated-trial experiment harness.

pub mod experiment;
pub mod metrics;

pub use experiment::{
    accuracy_on, classify, grid_search, results_csv, run_trial, run_trials, smooth, summarize, summary_csv, tune_beta, tune_emp,
    Choice, ClassifierKind, ExperimentConfig, FeatureKind, GridSearch, Scene, Scores, SmoothingContext, Smoother,
    StageTimes, Stat, TrialRecord, TrialSet, TrialSummary, BETA_GRID, LAMBDA_GRID,
};
pub use metrics::{confusion, metrics, ConfusionMatrix, MetricReport};
