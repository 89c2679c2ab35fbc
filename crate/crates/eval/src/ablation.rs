//! Re-running the Proposed arm with components switched off.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use pipeward_core::policy::Policy;
use pipeward_core::VulnerabilityClass;
use serde::{Deserialize, Serialize};

use crate::experiment::{
    run_experiment, BaselineKind, Component, EvalError, Experiment, ExperimentOptions,
    MetricsReport,
};
use crate::suite::ScenarioSuite;

/// Ablated minus baseline, per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDelta {
    pub class: VulnerabilityClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub false_positives: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub disabled: Vec<Component>,
    pub baseline: MetricsReport,
    pub ablated: MetricsReport,
    pub per_class: Vec<ClassDelta>,
    pub false_positive_delta: i64,
    pub mttm_delta: Option<f64>,
    pub overhead_delta: f64,
    pub autonomy_delta: f64,
    /// Whether every class's confusion counts are unchanged.
    pub confusion_identical: bool,
}

impl AblationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ablation reports serialize")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision_delta,recall_delta,f1_delta,false_positive_delta\n");
        for d in &self.per_class {
            writeln!(
                out,
                "{},{:?},{:?},{:?},{}",
                d.class, d.precision, d.recall, d.f1, d.false_positives
            )
            .unwrap();
        }
        out
    }
}

/// Runs the Proposed arm again with `disable` switched off and reports the
/// metric deltas against `baseline`, which must be an unablated Proposed
/// report on the same suite.
pub fn ablation(
    baseline: &MetricsReport,
    suite: &ScenarioSuite,
    policy: Option<&Policy>,
    options: &ExperimentOptions,
    disable: &BTreeSet<Component>,
) -> Result<(AblationReport, Experiment), EvalError> {
    if baseline.arm != BaselineKind::Proposed || !baseline.disabled.is_empty() {
        return Err(EvalError::Mismatch(
            "ablation baseline must be an unablated Proposed report".into(),
        ));
    }
    if baseline.suite_hash != suite.hash() {
        return Err(EvalError::Mismatch(format!(
            "baseline was run on suite `{}`, not `{}`",
            baseline.suite_id, suite.id
        )));
    }
    let options = ExperimentOptions {
        disable: disable.clone(),
        ..options.clone()
    };
    let experiment = run_experiment(BaselineKind::Proposed, suite, baseline.seed, policy, &options)?;
    let ablated = &experiment.report;

    let mut per_class = Vec::new();
    let mut confusion_identical = true;
    for class in VulnerabilityClass::ALL {
        let b = baseline.metrics.per_class[&class];
        let a = ablated.metrics.per_class[&class];
        confusion_identical &= a.counts == b.counts;
        per_class.push(ClassDelta {
            class,
            precision: a.precision - b.precision,
            recall: a.recall - b.recall,
            f1: a.f1 - b.f1,
            false_positives: a.counts.fp as i64 - b.counts.fp as i64,
        });
    }
    let report = AblationReport {
        disabled: disable.iter().copied().collect(),
        baseline: baseline.clone(),
        ablated: ablated.clone(),
        false_positive_delta: ablated.metrics.total_false_positives() as i64
            - baseline.metrics.total_false_positives() as i64,
        mttm_delta: ablated
            .metrics
            .mttm_minutes
            .zip(baseline.metrics.mttm_minutes)
            .map(|(a, b)| a - b),
        overhead_delta: ablated.metrics.overhead_percent - baseline.metrics.overhead_percent,
        autonomy_delta: ablated.metrics.autonomy_rate - baseline.metrics.autonomy_rate,
        confusion_identical,
        per_class,
    };
    Ok((report, experiment))
}
