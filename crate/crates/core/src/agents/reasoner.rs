use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Finding;
use crate::domain::{MitigationAction, PipelineStage, VulnerabilityClass};

/// Fused verdict over all findings of one dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    /// `None` means benign.
    pub verdict: Option<VulnerabilityClass>,
    pub severity: f64,
    /// Preferred first.
    pub candidate_actions: Vec<MitigationAction>,
    pub rationale: String,
    /// Distinct stages, beyond the first, carrying findings for the verdict.
    pub prior_alerts: u8,
    /// Earliest stage with evidence for the verdict.
    pub evidence_stage: Option<PipelineStage>,
}

impl Assessment {
    pub fn benign(rationale: impl Into<String>) -> Assessment {
        Assessment {
            verdict: None,
            severity: 0.0,
            candidate_actions: vec![MitigationAction::AllowContinue],
            rationale: rationale.into(),
            prior_alerts: 0,
            evidence_stage: None,
        }
    }

    pub fn is_benign(&self) -> bool {
        self.verdict.is_none()
    }
}

/// Where the pipeline is when the reasoner is consulted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonContext {
    pub run_id: String,
    pub stage: PipelineStage,
    pub step: u32,
}

/// Turns agent findings into an [`Assessment`]. Implementations must be
/// deterministic in their inputs and uphold the assessment invariants:
/// a benign verdict proposes only `AllowContinue`, and a non-benign one
/// carries a rationale naming its evidence.
///
/// [`RuleReasoner`] is the in-process implementation. A model-backed
/// reasoner would sit behind the same trait as an out-of-process adapter
/// speaking the tool protocol.
pub trait Reasoner {
    fn reason(&self, findings: &[Finding], context: &ReasonContext) -> Assessment;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReasonerConfig {
    pub threshold: f64,
    /// Odds multiplier when a class has findings in two or more stages.
    pub cross_stage_factor: f64,
    /// Noisy-OR fusion and cross-stage correlation. When off, each class
    /// scores its single strongest finding.
    pub correlate: bool,
    /// Verdicts below this severity list human review first.
    pub review_below: f64,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            threshold: 0.5,
            cross_stage_factor: 1.5,
            correlate: true,
            review_below: 2.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleReasoner {
    pub config: ReasonerConfig,
}

impl RuleReasoner {
    pub fn new(config: ReasonerConfig) -> RuleReasoner {
        RuleReasoner { config }
    }

    /// Without correlation: no fusion at all.
    pub fn uncorrelated() -> RuleReasoner {
        RuleReasoner::new(ReasonerConfig {
            correlate: false,
            ..ReasonerConfig::default()
        })
    }

    /// Aggregate confidence of a class over its findings.
    pub fn aggregate(&self, findings: &[&Finding]) -> f64 {
        if findings.is_empty() {
            return 0.0;
        }
        if !self.config.correlate {
            return findings.iter().map(|f| f.confidence).fold(0.0, f64::max);
        }
        let miss: f64 = findings.iter().map(|f| 1.0 - f.confidence).product();
        let noisy_or = 1.0 - miss;
        let stages: BTreeSet<_> = findings.iter().map(|f| f.stage).collect();
        if stages.len() < 2 || noisy_or >= 1.0 {
            return noisy_or;
        }
        let odds = noisy_or / (1.0 - noisy_or) * self.config.cross_stage_factor;
        (odds / (1.0 + odds)).min(1.0)
    }
}

fn candidate_actions(
    class: VulnerabilityClass,
    origin: PipelineStage,
    severity: f64,
    review_below: f64,
) -> Vec<MitigationAction> {
    use MitigationAction::*;
    let targeted = match class {
        VulnerabilityClass::BrokenAccessControl => Some(RevokeCredentials),
        VulnerabilityClass::Misconfiguration => Some(ApplyConfigPatch),
        VulnerabilityClass::Injection | VulnerabilityClass::InsecureDeserialization => match origin
        {
            PipelineStage::SourceManagement => Some(OpenGuardPullRequest),
            PipelineStage::DependencyResolution => Some(QuarantineDependency),
            _ => None,
        },
    };
    let mut actions = Vec::with_capacity(4);
    if severity < review_below {
        actions.push(RequestReview);
    }
    actions.extend(targeted);
    actions.push(BlockBuild);
    actions.push(PauseBuild);
    if severity >= review_below {
        actions.push(RequestReview);
    }
    actions
}

impl Reasoner for RuleReasoner {
    fn reason(&self, findings: &[Finding], _context: &ReasonContext) -> Assessment {
        let mut best: Option<(VulnerabilityClass, f64)> = None;
        for class in VulnerabilityClass::ALL {
            let of_class: Vec<&Finding> =
                findings.iter().filter(|f| f.hypothesis == class).collect();
            let score = self.aggregate(&of_class);
            if score > 0.0 && best.is_none_or(|(_, s)| score > s) {
                best = Some((class, score));
            }
        }
        let Some((class, severity)) = best.filter(|(_, s)| *s >= self.config.threshold) else {
            return Assessment::benign("no class reached the detection threshold");
        };

        let support: Vec<&Finding> = findings.iter().filter(|f| f.hypothesis == class).collect();
        let stages: BTreeSet<PipelineStage> = support.iter().map(|f| f.stage).collect();
        let origin = *stages.first().expect("verdict has supporting findings");
        let evidence: Vec<String> = support
            .iter()
            .map(|f| {
                format!(
                    "{}@{} by {} ({:.2})",
                    f.evidence.join("+"),
                    f.stage,
                    f.role,
                    f.confidence
                )
            })
            .collect();
        let mode = if self.config.correlate && stages.len() >= 2 {
            "correlated across stages"
        } else if self.config.correlate {
            "fused"
        } else {
            "strongest single finding"
        };
        Assessment {
            verdict: Some(class),
            severity,
            candidate_actions: candidate_actions(class, origin, severity, self.config.review_below),
            rationale: format!(
                "{class} suspected (score {severity:.3}, {mode}); evidence: {}",
                evidence.join("; ")
            ),
            prior_alerts: (stages.len() - 1).min(3) as u8,
            evidence_stage: Some(origin),
        }
    }
}
