//! Experiment harness: runs the defense arms over a scenario suite, turns
//! episode traces into metrics, and tabulates comparisons and ablations.

pub mod ablation;
pub mod compare;
pub mod experiment;
pub mod metrics;
pub mod suite;

pub use ablation::{ablation, AblationReport, ClassDelta};
pub use compare::{compare, Comparison, CompareError};
pub use experiment::{
    calibration_env, calibration_train_config, run_experiment, train_policy, BaselineKind,
    Component, EvalError, Experiment, ExperimentOptions, LedgerSummary, MetricsReport,
};
pub use metrics::{
    compute_metrics, f1_score, ratio, ClassMetrics, ConfusionCounts, DecisionRecord, EpisodeTrace,
    Label, Metrics, MetricsError,
};
pub use suite::{ScenarioSuite, SuiteError};
