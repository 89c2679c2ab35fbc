use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{MitigationAction, PipelineStage, SignalKind, VulnerabilityClass};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("reward parameter `{0}` must be finite and non-negative")]
    RewardParam(&'static str),
    #[error("acceptance probability for {0} must lie in [0, 1]")]
    Acceptance(MitigationAction),
    #[error("delay for {0} must be finite and non-negative")]
    Delay(MitigationAction),
    #[error("max_steps_per_stage must be at least 1")]
    MaxSteps,
    #[error("{0}")]
    Invalid(String),
    #[error("environment config is not valid JSON: {0}")]
    Parse(String),
}

/// Coefficients of the per-step reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub eta: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            alpha: 1.0,
            beta: 0.5,
            delta: 0.01,
            eta: 0.25,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("eta", self.eta),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ConfigError::RewardParam(name));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> RewardParams {
        RewardParams {
            alpha: self.alpha * factor,
            beta: self.beta * factor,
            delta: self.delta * factor,
            eta: self.eta * factor,
        }
    }
}

/// Which attacks an action neutralizes. Empty filter lists match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationRule {
    pub action: MitigationAction,
    #[serde(default)]
    pub classes: Vec<VulnerabilityClass>,
    /// Stage the attack was injected at.
    #[serde(default)]
    pub origin_stages: Vec<PipelineStage>,
    /// Stage the run is at when the action is taken.
    #[serde(default)]
    pub current_stages: Vec<PipelineStage>,
    #[serde(default)]
    pub requires_acceptance: bool,
}

impl MitigationRule {
    pub fn matches(
        &self,
        class: VulnerabilityClass,
        origin: PipelineStage,
        current: PipelineStage,
    ) -> bool {
        (self.classes.is_empty() || self.classes.contains(&class))
            && (self.origin_stages.is_empty() || self.origin_stages.contains(&origin))
            && (self.current_stages.is_empty() || self.current_stages.contains(&current))
    }
}

fn default_mitigation_table() -> Vec<MitigationRule> {
    use MitigationAction::*;
    use PipelineStage::*;
    let pre_deployment = vec![SourceManagement, DependencyResolution, Build, ArtifactPackaging];
    vec![
        MitigationRule {
            action: BlockBuild,
            classes: vec![],
            origin_stages: vec![],
            current_stages: pre_deployment.clone(),
            requires_acceptance: false,
        },
        MitigationRule {
            action: PauseBuild,
            classes: vec![],
            origin_stages: vec![],
            current_stages: pre_deployment,
            requires_acceptance: false,
        },
        MitigationRule {
            action: QuarantineDependency,
            classes: vec![],
            origin_stages: vec![DependencyResolution],
            current_stages: vec![],
            requires_acceptance: false,
        },
        MitigationRule {
            action: ApplyConfigPatch,
            classes: vec![VulnerabilityClass::Misconfiguration],
            origin_stages: vec![],
            current_stages: vec![],
            requires_acceptance: true,
        },
        MitigationRule {
            action: RevokeCredentials,
            classes: vec![VulnerabilityClass::BrokenAccessControl],
            origin_stages: vec![],
            current_stages: vec![],
            requires_acceptance: false,
        },
        MitigationRule {
            action: OpenGuardPullRequest,
            classes: vec![],
            origin_stages: vec![SourceManagement],
            current_stages: vec![],
            requires_acceptance: true,
        },
        MitigationRule {
            action: RequestReview,
            classes: vec![],
            origin_stages: vec![],
            current_stages: vec![],
            requires_acceptance: true,
        },
    ]
}

fn default_delays() -> BTreeMap<MitigationAction, f64> {
    MitigationAction::ALL
        .into_iter()
        .map(|a| {
            let minutes = match a {
                MitigationAction::AllowContinue => 0.0,
                MitigationAction::RequestReview => 5.0,
                _ => 2.0,
            };
            (a, minutes)
        })
        .collect()
}

fn default_acceptance() -> BTreeMap<MitigationAction, f64> {
    MitigationAction::ALL
        .into_iter()
        .map(|a| {
            let p = match a {
                MitigationAction::OpenGuardPullRequest => 0.8,
                MitigationAction::ApplyConfigPatch => 0.7,
                MitigationAction::RequestReview => 0.9,
                _ => 1.0,
            };
            (a, p)
        })
        .collect()
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn default_benign_vocabulary() -> BTreeMap<SignalKind, Vec<String>> {
    BTreeMap::from([
        (
            SignalKind::CommitDiff,
            words(&[
                "rename_variable",
                "update_docs",
                "add_unit_test",
                "bump_changelog",
                "format_code",
                "refactor_helper",
            ]),
        ),
        (
            SignalKind::SbomEntry,
            words(&[
                "pinned_release",
                "verified_checksum",
                "license_mit",
                "license_apache",
                "patch_update",
                "signed_package",
            ]),
        ),
        (
            SignalKind::PipelineLog,
            words(&[
                "compile_ok",
                "tests_passed",
                "cache_hit",
                "lint_clean",
                "artifact_uploaded",
                "step_completed",
            ]),
        ),
        (
            SignalKind::PermissionRecord,
            words(&[
                "scoped_deploy_token",
                "least_privilege_role",
                "token_rotated",
                "mfa_enforced",
                "read_only_reader",
            ]),
        ),
        (
            SignalKind::ConfigManifest,
            words(&[
                "resource_limits_set",
                "tls_enabled",
                "healthcheck_defined",
                "non_root_user",
                "readonly_filesystem",
            ]),
        ),
    ])
}

/// Suspicious-looking but harmless tokens sprinkled into benign signals.
fn default_decoy_tokens() -> BTreeMap<SignalKind, Vec<String>> {
    BTreeMap::from([
        (SignalKind::CommitDiff, words(&["eval_in_test_fixture"])),
        (SignalKind::SbomEntry, words(&["prerelease_version_tag"])),
        (SignalKind::PipelineLog, words(&["verbose_shell_trace"])),
        (SignalKind::PermissionRecord, words(&["broad_read_scope"])),
        (SignalKind::ConfigManifest, words(&["verbose_logging_enabled"])),
    ])
}

/// Environment configuration. Every field has a shipped default; a JSON
/// config file only needs to list what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub reward: RewardParams,
    /// Build-delay increment per action, simulated minutes.
    pub delay_minutes: BTreeMap<MitigationAction, f64>,
    /// Probability that a developer accepts the action's fix.
    pub acceptance: BTreeMap<MitigationAction, f64>,
    /// A stage may be held by `PauseBuild` at most this many steps in total.
    pub max_steps_per_stage: u32,
    /// Simulated minutes a stage takes to complete.
    pub stage_minutes: f64,
    /// Reject benign (attack-free) runs.
    pub require_attack: bool,
    pub allow_multiple_attacks: bool,
    /// Per-stage probability of a decoy token in the benign signal.
    pub decoy_rate: f64,
    /// Per-stage probability of an extra decoy-bearing signal of a kind the
    /// stage does not normally emit (stray permission or config edits).
    pub ambient_decoy_rate: f64,
    pub benign_vocabulary: BTreeMap<SignalKind, Vec<String>>,
    pub decoy_tokens: BTreeMap<SignalKind, Vec<String>>,
    pub mitigation_table: Vec<MitigationRule>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            reward: RewardParams::default(),
            delay_minutes: default_delays(),
            acceptance: default_acceptance(),
            max_steps_per_stage: 2,
            stage_minutes: 6.0,
            require_attack: false,
            allow_multiple_attacks: true,
            decoy_rate: 0.04,
            ambient_decoy_rate: 0.0,
            benign_vocabulary: default_benign_vocabulary(),
            decoy_tokens: default_decoy_tokens(),
            mitigation_table: default_mitigation_table(),
        }
    }
}

impl EnvConfig {
    pub fn from_json(json: &str) -> Result<EnvConfig, ConfigError> {
        let config: EnvConfig =
            serde_json::from_str(json).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.reward.validate()?;
        for action in MitigationAction::ALL {
            let d = self.delay(action);
            if !d.is_finite() || d < 0.0 {
                return Err(ConfigError::Delay(action));
            }
            let p = self.acceptance_probability(action);
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::Acceptance(action));
            }
        }
        if self.max_steps_per_stage == 0 {
            return Err(ConfigError::MaxSteps);
        }
        if !self.stage_minutes.is_finite() || self.stage_minutes < 0.0 {
            return Err(ConfigError::Invalid("stage_minutes must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.decoy_rate) {
            return Err(ConfigError::Invalid("decoy_rate must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.ambient_decoy_rate) {
            return Err(ConfigError::Invalid("ambient_decoy_rate must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Missing table entries fall back to zero delay.
    pub fn delay(&self, action: MitigationAction) -> f64 {
        self.delay_minutes.get(&action).copied().unwrap_or(0.0)
    }

    /// Missing table entries fall back to certain acceptance.
    pub fn acceptance_probability(&self, action: MitigationAction) -> f64 {
        self.acceptance.get(&action).copied().unwrap_or(1.0)
    }

    /// Longest possible episode, in steps.
    pub fn max_episode_steps(&self) -> u32 {
        PipelineStage::COUNT as u32 * self.max_steps_per_stage
    }
}
