//! Shared vocabulary: vulnerability classes, pipeline stages, agent roles,
//! mitigation actions, attack scenarios and the signals they leave behind.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VulnerabilityClass {
    Injection,
    InsecureDeserialization,
    BrokenAccessControl,
    Misconfiguration,
}

impl VulnerabilityClass {
    pub const ALL: [VulnerabilityClass; 4] = [
        VulnerabilityClass::Injection,
        VulnerabilityClass::InsecureDeserialization,
        VulnerabilityClass::BrokenAccessControl,
        VulnerabilityClass::Misconfiguration,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            VulnerabilityClass::Injection => "Injection",
            VulnerabilityClass::InsecureDeserialization => "InsecureDeserialization",
            VulnerabilityClass::BrokenAccessControl => "BrokenAccessControl",
            VulnerabilityClass::Misconfiguration => "Misconfiguration",
        }
    }
}

impl fmt::Display for VulnerabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pipeline stages in progression order. A run never moves backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PipelineStage {
    SourceManagement,
    DependencyResolution,
    Build,
    ArtifactPackaging,
    Deployment,
}

impl PipelineStage {
    pub const ALL: [PipelineStage; 5] = [
        PipelineStage::SourceManagement,
        PipelineStage::DependencyResolution,
        PipelineStage::Build,
        PipelineStage::ArtifactPackaging,
        PipelineStage::Deployment,
    ];

    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn next(self) -> Option<PipelineStage> {
        PipelineStage::ALL.get(self.index() + 1).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PipelineStage::SourceManagement => "SourceManagement",
            PipelineStage::DependencyResolution => "DependencyResolution",
            PipelineStage::Build => "Build",
            PipelineStage::ArtifactPackaging => "ArtifactPackaging",
            PipelineStage::Deployment => "Deployment",
        }
    }

    pub fn parse(s: &str) -> Option<PipelineStage> {
        PipelineStage::ALL.into_iter().find(|stage| stage.name() == s)
    }

    /// The signal kind a stage emits during normal operation.
    pub fn native_signal(self) -> SignalKind {
        match self {
            PipelineStage::SourceManagement => SignalKind::CommitDiff,
            PipelineStage::DependencyResolution => SignalKind::SbomEntry,
            PipelineStage::Build => SignalKind::PipelineLog,
            PipelineStage::ArtifactPackaging => SignalKind::ConfigManifest,
            PipelineStage::Deployment => SignalKind::PermissionRecord,
        }
    }
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    CommitDiff,
    SbomEntry,
    PipelineLog,
    PermissionRecord,
    ConfigManifest,
}

impl SignalKind {
    pub const ALL: [SignalKind; 5] = [
        SignalKind::CommitDiff,
        SignalKind::SbomEntry,
        SignalKind::PipelineLog,
        SignalKind::PermissionRecord,
        SignalKind::ConfigManifest,
    ];

    /// The single role allowed to observe this kind of signal.
    pub fn observer(self) -> AgentRole {
        match self {
            SignalKind::CommitDiff => AgentRole::CodeAnalysis,
            SignalKind::SbomEntry => AgentRole::DependencyIntelligence,
            SignalKind::PipelineLog => AgentRole::CICDMonitoring,
            SignalKind::PermissionRecord => AgentRole::AccessControl,
            SignalKind::ConfigManifest => AgentRole::ConfigurationAudit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentRole {
    CodeAnalysis,
    DependencyIntelligence,
    CICDMonitoring,
    AccessControl,
    ConfigurationAudit,
}

impl AgentRole {
    pub const ALL: [AgentRole; 5] = [
        AgentRole::CodeAnalysis,
        AgentRole::DependencyIntelligence,
        AgentRole::CICDMonitoring,
        AgentRole::AccessControl,
        AgentRole::ConfigurationAudit,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn observed_kind(self) -> SignalKind {
        match self {
            AgentRole::CodeAnalysis => SignalKind::CommitDiff,
            AgentRole::DependencyIntelligence => SignalKind::SbomEntry,
            AgentRole::CICDMonitoring => SignalKind::PipelineLog,
            AgentRole::AccessControl => SignalKind::PermissionRecord,
            AgentRole::ConfigurationAudit => SignalKind::ConfigManifest,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentRole::CodeAnalysis => "CodeAnalysis",
            AgentRole::DependencyIntelligence => "DependencyIntelligence",
            AgentRole::CICDMonitoring => "CICDMonitoring",
            AgentRole::AccessControl => "AccessControl",
            AgentRole::ConfigurationAudit => "ConfigurationAudit",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The action set of the mitigation MDP. Declaration order is the fixed
/// enumeration order used for greedy tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MitigationAction {
    AllowContinue,
    BlockBuild,
    QuarantineDependency,
    RequestReview,
    RevokeCredentials,
    PauseBuild,
    ApplyConfigPatch,
    OpenGuardPullRequest,
}

impl MitigationAction {
    pub const ALL: [MitigationAction; 8] = [
        MitigationAction::AllowContinue,
        MitigationAction::BlockBuild,
        MitigationAction::QuarantineDependency,
        MitigationAction::RequestReview,
        MitigationAction::RevokeCredentials,
        MitigationAction::PauseBuild,
        MitigationAction::ApplyConfigPatch,
        MitigationAction::OpenGuardPullRequest,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<MitigationAction> {
        MitigationAction::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MitigationAction::AllowContinue => "AllowContinue",
            MitigationAction::BlockBuild => "BlockBuild",
            MitigationAction::QuarantineDependency => "QuarantineDependency",
            MitigationAction::RequestReview => "RequestReview",
            MitigationAction::RevokeCredentials => "RevokeCredentials",
            MitigationAction::PauseBuild => "PauseBuild",
            MitigationAction::ApplyConfigPatch => "ApplyConfigPatch",
            MitigationAction::OpenGuardPullRequest => "OpenGuardPullRequest",
        }
    }

    pub fn parse(s: &str) -> Option<MitigationAction> {
        MitigationAction::ALL.into_iter().find(|a| a.name() == s)
    }

    /// Actions that wait on a human before taking effect.
    pub fn is_human_gated(self) -> bool {
        self == MitigationAction::RequestReview
    }
}

impl fmt::Display for MitigationAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario `{0}` is neither syntactically nor semantically detectable")]
    Undetectable(String),
    #[error("scenario `{0}` has an empty payload")]
    EmptyPayload(String),
    #[error("scenario `{id}` severity {severity} is outside [0, 1]")]
    Severity { id: String, severity: f64 },
    #[error("scenario corpus is not valid JSON: {0}")]
    Parse(String),
}

/// One injectable attack. `payload` holds the evidence tokens the attack
/// leaves in the signals of its stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackScenario {
    pub id: String,
    pub class: VulnerabilityClass,
    pub stage: PipelineStage,
    pub payload: Vec<String>,
    pub syntactic_detectable: bool,
    pub semantic_detectable: bool,
    pub severity: f64,
}

impl AttackScenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !self.syntactic_detectable && !self.semantic_detectable {
            return Err(ScenarioError::Undetectable(self.id.clone()));
        }
        if self.payload.is_empty() {
            return Err(ScenarioError::EmptyPayload(self.id.clone()));
        }
        if !(0.0..=1.0).contains(&self.severity) {
            return Err(ScenarioError::Severity {
                id: self.id.clone(),
                severity: self.severity,
            });
        }
        Ok(())
    }

    /// Kind of signal the attack's primary evidence appears in.
    pub fn signal_kind(&self) -> SignalKind {
        match self.class {
            VulnerabilityClass::BrokenAccessControl => SignalKind::PermissionRecord,
            VulnerabilityClass::Misconfiguration => SignalKind::ConfigManifest,
            VulnerabilityClass::Injection | VulnerabilityClass::InsecureDeserialization => {
                match self.stage {
                    PipelineStage::SourceManagement => SignalKind::CommitDiff,
                    PipelineStage::DependencyResolution => SignalKind::SbomEntry,
                    _ => SignalKind::PipelineLog,
                }
            }
        }
    }
}

/// Parses and validates a scenario corpus (a JSON array of scenarios).
pub fn parse_scenarios(json: &str) -> Result<Vec<AttackScenario>, ScenarioError> {
    let scenarios: Vec<AttackScenario> =
        serde_json::from_str(json).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    for s in &scenarios {
        s.validate()?;
    }
    Ok(scenarios)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSignal {
    pub stage: PipelineStage,
    pub kind: SignalKind,
    pub content: String,
    /// Ground-truth label; never exposed through observation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_attack: Option<String>,
}

impl ObservationSignal {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.content.split_whitespace()
    }

    pub fn stripped(&self) -> ObservationSignal {
        ObservationSignal {
            origin_attack: None,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario() -> AttackScenario {
        AttackScenario {
            id: "inj-1".into(),
            class: VulnerabilityClass::Injection,
            stage: PipelineStage::SourceManagement,
            payload: vec!["exec_untrusted_input".into()],
            syntactic_detectable: true,
            semantic_detectable: false,
            severity: 0.8,
        }
    }

    #[test]
    fn undetectable_scenario_is_rejected() {
        let mut s = scenario();
        s.syntactic_detectable = false;
        assert_eq!(s.validate(), Err(ScenarioError::Undetectable("inj-1".into())));
    }

    #[test]
    fn empty_payload_is_rejected() {
        let mut s = scenario();
        s.payload.clear();
        assert!(matches!(s.validate(), Err(ScenarioError::EmptyPayload(_))));
    }

    #[test]
    fn corpus_rejects_unknown_fields() {
        let json = r#"[{"id":"a","class":"Injection","stage":"Build","payload":["x"],
            "syntactic_detectable":true,"semantic_detectable":false,"severity":0.5,"extra":1}]"#;
        assert!(matches!(parse_scenarios(json), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn every_signal_kind_has_exactly_one_observer() {
        for kind in SignalKind::ALL {
            assert_eq!(kind.observer().observed_kind(), kind);
        }
        for role in AgentRole::ALL {
            assert_eq!(role.observed_kind().observer(), role);
        }
    }

    #[test]
    fn stages_are_totally_ordered() {
        for pair in PipelineStage::ALL.windows(2) {
            assert!(pair[0] < pair[1]);
            assert_eq!(pair[0].next(), Some(pair[1]));
        }
        assert_eq!(PipelineStage::Deployment.next(), None);
    }
}
