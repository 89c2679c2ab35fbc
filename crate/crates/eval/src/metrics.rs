//! Detection quality, latency, overhead, autonomy and rollback metrics
//! computed from labeled episode traces.

use std::collections::BTreeMap;

use pipeward_core::env::{AttackEvent, OutcomeFlags};
use pipeward_core::{MitigationAction, PipelineStage, VulnerabilityClass};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ground truth of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "class")]
pub enum Label {
    Benign,
    Attack(VulnerabilityClass),
}

/// One decision point of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub step: u32,
    pub stage: PipelineStage,
    pub clock_minutes: f64,
    /// Encoded policy state, for arms that have one.
    pub state_id: Option<usize>,
    /// Class the arm attributed the situation to; `None` means benign.
    pub verdict: Option<VulnerabilityClass>,
    pub severity: f64,
    pub action: MitigationAction,
    pub outcome: OutcomeFlags,
    pub reward: f64,
    /// Whether undoing the action right after it restores the pipeline
    /// controls.
    pub rollback_restores: bool,
    pub rationale: String,
}

/// Everything recorded about one episode; the unit `compute_metrics` works on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode: usize,
    pub run_id: String,
    pub seed: u64,
    pub truth: Option<Label>,
    pub decisions: Vec<DecisionRecord>,
    pub injections: Vec<AttackEvent>,
    pub mitigations: Vec<AttackEvent>,
    /// Action-induced delay, simulated minutes.
    pub build_delay: f64,
    /// Duration of the same run with no defense acting.
    pub undefended_minutes: f64,
    /// Ledger block holding this episode's decisions, if one was written.
    pub ledger_block: Option<u64>,
}

impl EpisodeTrace {
    /// The class named at the first intervention, if any.
    pub fn prediction(&self) -> Option<VulnerabilityClass> {
        self.decisions
            .iter()
            .find(|d| d.action != MitigationAction::AllowContinue)
            .and_then(|d| d.verdict)
    }

    pub fn interventions(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.decisions
            .iter()
            .filter(|d| d.action != MitigationAction::AllowContinue)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("episode {0} has no ground-truth label")]
    MissingGroundTruth(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `num / den` with `0/0 = 0`.
pub fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    pub fn from_counts(counts: ConfusionCounts) -> ClassMetrics {
        let precision = ratio(counts.tp as f64, (counts.tp + counts.fp) as f64);
        let recall = ratio(counts.tp as f64, (counts.tp + counts.fn_) as f64);
        ClassMetrics {
            counts,
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }
}

/// Metrics over a set of episodes, independent of how they were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: BTreeMap<VulnerabilityClass, ClassMetrics>,
    /// Mean injection-to-mitigation minutes over mitigated attacks; `None`
    /// when nothing was mitigated.
    pub mttm_minutes: Option<f64>,
    pub overhead_percent: f64,
    pub autonomy_rate: f64,
    pub rollback_success_rate: f64,
    pub episodes: usize,
    pub attacks: usize,
    pub mitigated_attacks: usize,
    pub interventions: usize,
    /// Interventions taken while no attack was active.
    pub false_positive_actions: usize,
}

impl Metrics {
    pub fn total_false_positives(&self) -> u64 {
        self.per_class.values().map(|m| m.counts.fp).sum()
    }
}

/// Episode-level confusion per class: the episode's truth against the
/// class named at its first intervention.
pub fn compute_metrics(outcomes: &[EpisodeTrace]) -> Result<Metrics, MetricsError> {
    let mut counts: BTreeMap<VulnerabilityClass, ConfusionCounts> = VulnerabilityClass::ALL
        .into_iter()
        .map(|c| (c, ConfusionCounts::default()))
        .collect();
    let mut latencies = Vec::new();
    let mut attacks = 0;
    let (mut interventions, mut autonomous, mut restorable, mut fp_actions) = (0, 0, 0, 0);
    let (mut extra_minutes, mut undefended_minutes) = (0.0, 0.0);

    for trace in outcomes {
        let truth = trace.truth.ok_or(MetricsError::MissingGroundTruth(trace.episode))?;
        let predicted = trace.prediction();
        for (class, c) in counts.iter_mut() {
            let actual = truth == Label::Attack(*class);
            match (actual, predicted == Some(*class)) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }

        attacks += trace.injections.len();
        for m in &trace.mitigations {
            if let Some(inj) = trace.injections.iter().find(|i| i.attack_id == m.attack_id) {
                latencies.push(m.clock_minutes - inj.clock_minutes);
            }
        }

        for d in trace.interventions() {
            interventions += 1;
            autonomous += usize::from(!d.action.is_human_gated());
            restorable += usize::from(d.rollback_restores);
            fp_actions += usize::from(d.outcome.false_positive);
        }

        if truth == Label::Benign {
            extra_minutes += trace.build_delay;
            undefended_minutes += trace.undefended_minutes;
        }
    }

    let mttm_minutes = if latencies.is_empty() {
        None
    } else {
        Some(latencies.iter().sum::<f64>() / latencies.len() as f64)
    };
    Ok(Metrics {
        per_class: counts
            .into_iter()
            .map(|(c, n)| (c, ClassMetrics::from_counts(n)))
            .collect(),
        mttm_minutes,
        overhead_percent: ratio(extra_minutes, undefended_minutes) * 100.0,
        autonomy_rate: ratio(autonomous as f64, interventions as f64),
        rollback_success_rate: ratio(restorable as f64, interventions as f64),
        episodes: outcomes.len(),
        attacks,
        mitigated_attacks: latencies.len(),
        interventions,
        false_positive_actions: fp_actions,
    })
}
