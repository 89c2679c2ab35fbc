use serde::{Deserialize, Serialize};

use crate::agents::Assessment;
use crate::domain::{PipelineStage, VulnerabilityClass};
use crate::env::EnvState;

/// Bumped whenever the feature layout below changes; stored in policy
/// snapshots so a stale policy is not silently applied to new ids.
pub const ENCODING_VERSION: u32 = 1;

pub const CLASS_OPTIONS: usize = VulnerabilityClass::ALL.len() + 1;
pub const SEVERITY_BUCKETS: usize = 3;
pub const PRIOR_ALERT_LEVELS: usize = 4;
pub const NUM_STATES: usize =
    PipelineStage::COUNT * CLASS_OPTIONS * SEVERITY_BUCKETS * PRIOR_ALERT_LEVELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeverityBucket {
    Low,
    Medium,
    High,
}

impl SeverityBucket {
    /// Boundaries at 1/3 and 2/3; a boundary value belongs to the upper bucket.
    pub fn of(severity: f64) -> SeverityBucket {
        if severity < 1.0 / 3.0 {
            SeverityBucket::Low
        } else if severity < 2.0 / 3.0 {
            SeverityBucket::Medium
        } else {
            SeverityBucket::High
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// The discrete view of the pipeline the policy acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateFeatures {
    pub stage: PipelineStage,
    /// `None` is the benign option.
    pub verdict: Option<VulnerabilityClass>,
    pub severity: SeverityBucket,
    /// Capped at 3.
    pub prior_alerts: u8,
}

impl StateFeatures {
    /// Benign assessments collapse onto (stage, benign, low, 0).
    pub fn from_assessment(stage: PipelineStage, assessment: &Assessment) -> StateFeatures {
        match assessment.verdict {
            None => StateFeatures {
                stage,
                verdict: None,
                severity: SeverityBucket::Low,
                prior_alerts: 0,
            },
            Some(class) => StateFeatures {
                stage,
                verdict: Some(class),
                severity: SeverityBucket::of(assessment.severity),
                prior_alerts: assessment.prior_alerts.min(3),
            },
        }
    }

    pub fn id(&self) -> usize {
        let class = self.verdict.map_or(0, |c| c.index() + 1);
        ((self.stage.index() * CLASS_OPTIONS + class) * SEVERITY_BUCKETS + self.severity.index())
            * PRIOR_ALERT_LEVELS
            + self.prior_alerts.min(3) as usize
    }

    pub fn from_id(id: usize) -> Option<StateFeatures> {
        if id >= NUM_STATES {
            return None;
        }
        let prior = id % PRIOR_ALERT_LEVELS;
        let rest = id / PRIOR_ALERT_LEVELS;
        let bucket = rest % SEVERITY_BUCKETS;
        let rest = rest / SEVERITY_BUCKETS;
        let class = rest % CLASS_OPTIONS;
        let stage = rest / CLASS_OPTIONS;
        Some(StateFeatures {
            stage: PipelineStage::ALL[stage],
            verdict: class.checked_sub(1).map(|c| VulnerabilityClass::ALL[c]),
            severity: [SeverityBucket::Low, SeverityBucket::Medium, SeverityBucket::High][bucket],
            prior_alerts: prior as u8,
        })
    }
}

/// Maps the current stage and the fused assessment to one of
/// [`NUM_STATES`] ids.
pub fn encode_state(state: &EnvState, assessment: &Assessment) -> usize {
    StateFeatures::from_assessment(state.stage, assessment).id()
}
