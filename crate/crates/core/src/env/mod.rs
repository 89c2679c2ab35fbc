//! Deterministic discrete-event simulation of one CI/CD pipeline run.
//!
//! A run walks the five [`PipelineStage`]s in order. Entering a stage reveals
//! its benign signal, injects the attacks scheduled for it, and lets attacks
//! that are still active leave behavioural traces downstream. Each call to
//! [`PipelineEnv::step`] applies one [`MitigationAction`] and returns the
//! reward of that step.

mod config;

pub use config::{ConfigError, EnvConfig, MitigationRule, RewardParams};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AgentRole, AttackScenario, MitigationAction, ObservationSignal, PipelineStage, ScenarioError,
    SignalKind, VulnerabilityClass,
};
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("configuration requires at least one attack scenario")]
    NoAttacks,
    #[error("configuration allows a single attack per run, got {0}")]
    TooManyAttacks(usize),
    #[error("run `{0}` is finished; step is not allowed")]
    Finished(String),
    #[error("run `{0}` is paused")]
    Paused(String),
    #[error("run `{0}` is not paused")]
    NotPaused(String),
    #[error("run `{0}` is still in progress")]
    InProgress(String),
}

/// Indicator terms of the reward for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OutcomeFlags {
    pub attack_mitigated: bool,
    pub false_positive: bool,
    pub developer_accepted: bool,
    /// Build delay added by this step, simulated minutes.
    pub build_delay: f64,
}

/// `alpha*mitigated - beta*false_positive - delta*build_delay + eta*accepted`.
pub fn compute_reward(outcome: &OutcomeFlags, params: &RewardParams) -> f64 {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    params.alpha * ind(outcome.attack_mitigated) - params.beta * ind(outcome.false_positive)
        - params.delta * outcome.build_delay
        + params.eta * ind(outcome.developer_accepted)
}

/// Timestamped attack lifecycle event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEvent {
    pub attack_id: String,
    pub class: VulnerabilityClass,
    pub step: u32,
    pub stage: PipelineStage,
    pub clock_minutes: f64,
}

/// Pipeline-side effects of mitigation actions, used to check rollback.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PipelineControls {
    pub blocked: bool,
    pub paused: bool,
    pub quarantined: Vec<u32>,
    pub credentials_revoked: bool,
    /// Bumped on every revocation; reissued credentials never regain an old epoch.
    pub credential_epoch: u32,
    pub config_patches: Vec<u32>,
    pub guard_pull_requests: Vec<u32>,
    pub review_requests: Vec<u32>,
}

impl PipelineControls {
    pub fn apply(&mut self, action: MitigationAction, step: u32) {
        match action {
            MitigationAction::AllowContinue => {}
            MitigationAction::BlockBuild => self.blocked = true,
            MitigationAction::PauseBuild => self.paused = true,
            MitigationAction::QuarantineDependency => self.quarantined.push(step),
            MitigationAction::RevokeCredentials => {
                self.credentials_revoked = true;
                self.credential_epoch += 1;
            }
            MitigationAction::ApplyConfigPatch => self.config_patches.push(step),
            MitigationAction::OpenGuardPullRequest => self.guard_pull_requests.push(step),
            MitigationAction::RequestReview => self.review_requests.push(step),
        }
    }

    /// Applies the inverse of `action` taken at `step`.
    pub fn invert(&mut self, action: MitigationAction, step: u32) {
        fn remove(list: &mut Vec<u32>, step: u32) {
            if let Some(pos) = list.iter().rposition(|s| *s == step) {
                list.remove(pos);
            }
        }
        match action {
            MitigationAction::AllowContinue => {}
            MitigationAction::BlockBuild => self.blocked = false,
            MitigationAction::PauseBuild => self.paused = false,
            MitigationAction::QuarantineDependency => remove(&mut self.quarantined, step),
            // Reissue: the epoch stays bumped.
            MitigationAction::RevokeCredentials => self.credentials_revoked = false,
            MitigationAction::ApplyConfigPatch => remove(&mut self.config_patches, step),
            MitigationAction::OpenGuardPullRequest => remove(&mut self.guard_pull_requests, step),
            MitigationAction::RequestReview => remove(&mut self.review_requests, step),
        }
    }
}

/// Full state of one pipeline run. Everything except `signals` (after label
/// stripping) is hidden from the agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub run_id: String,
    pub stage: PipelineStage,
    pub step: u32,
    pub active_attacks: Vec<AttackScenario>,
    pub signals: Vec<ObservationSignal>,
    /// Accumulated action-induced delay, simulated minutes.
    pub build_delay: f64,
    pub rng_seed: u64,
    pub done: bool,
    pub terminal_outcome: Option<OutcomeFlags>,
    /// Simulated wall clock: completed stages plus action delays.
    pub clock_minutes: f64,
    pub paused: bool,
    pub holds_in_stage: u32,
    pub controls: PipelineControls,
    pub scenarios: Vec<AttackScenario>,
    pub benign_schedule: Vec<ObservationSignal>,
    #[serde(default)]
    pub ambient_schedule: Vec<ObservationSignal>,
    pub resolved_signals: Vec<ObservationSignal>,
    pub injections: Vec<AttackEvent>,
    pub mitigations: Vec<AttackEvent>,
}

impl EnvState {
    pub fn is_benign_run(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Total simulated duration if the run ended now.
    pub fn duration_minutes(&self) -> f64 {
        self.clock_minutes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub outcome: OutcomeFlags,
}

/// The pipeline simulator. Holds only configuration; all run state lives in
/// immutable [`EnvState`] values.
#[derive(Debug, Clone, Default)]
pub struct PipelineEnv {
    config: EnvConfig,
}

impl PipelineEnv {
    pub fn new(config: EnvConfig) -> Result<PipelineEnv, ConfigError> {
        config.validate()?;
        Ok(PipelineEnv { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Starts a run with an id derived from the seed.
    pub fn reset(&self, scenarios: &[AttackScenario], seed: u64) -> Result<EnvState, EnvError> {
        self.reset_named(format!("run-{seed:016x}"), scenarios, seed)
    }

    pub fn reset_named(
        &self,
        run_id: impl Into<String>,
        scenarios: &[AttackScenario],
        seed: u64,
    ) -> Result<EnvState, EnvError> {
        for s in scenarios {
            s.validate()?;
        }
        if scenarios.is_empty() && self.config.require_attack {
            return Err(EnvError::NoAttacks);
        }
        if scenarios.len() > 1 && !self.config.allow_multiple_attacks {
            return Err(EnvError::TooManyAttacks(scenarios.len()));
        }

        let mut rng = seed::rng(seed, seed::ENV_STREAM);
        let benign_schedule = PipelineStage::ALL
            .into_iter()
            .map(|stage| self.benign_signal(stage, &mut rng))
            .collect();
        let ambient_schedule = self.ambient_signals(seed);

        let mut state = EnvState {
            run_id: run_id.into(),
            stage: PipelineStage::SourceManagement,
            step: 0,
            active_attacks: Vec::new(),
            signals: Vec::new(),
            build_delay: 0.0,
            rng_seed: seed,
            done: false,
            terminal_outcome: None,
            clock_minutes: 0.0,
            paused: false,
            holds_in_stage: 0,
            controls: PipelineControls::default(),
            scenarios: scenarios.to_vec(),
            benign_schedule,
            ambient_schedule,
            resolved_signals: Vec::new(),
            injections: Vec::new(),
            mitigations: Vec::new(),
        };
        self.enter_stage(&mut state);
        Ok(state)
    }

    fn benign_signal(&self, stage: PipelineStage, rng: &mut impl Rng) -> ObservationSignal {
        let kind = stage.native_signal();
        let mut tokens: Vec<&str> = Vec::new();
        if let Some(vocab) = self.config.benign_vocabulary.get(&kind) {
            for _ in 0..3 {
                if let Some(tok) = vocab.choose(rng) {
                    tokens.push(tok);
                }
            }
        }
        let decoy_draw: f64 = rng.gen();
        if decoy_draw < self.config.decoy_rate {
            if let Some(tok) = self
                .config
                .decoy_tokens
                .get(&kind)
                .and_then(|decoys| decoys.choose(rng))
            {
                tokens.push(tok);
            }
        }
        ObservationSignal {
            stage,
            kind,
            content: format!("{} {}", signal_prefix(kind), tokens.join(" ")),
            origin_attack: None,
        }
    }

    /// Off-kind decoys drawn from their own stream, so enabling them leaves
    /// the benign schedule unchanged.
    fn ambient_signals(&self, seed: u64) -> Vec<ObservationSignal> {
        let rate = self.config.ambient_decoy_rate;
        if rate <= 0.0 {
            return Vec::new();
        }
        let mut rng = seed::rng(seed, seed::AMBIENT_STREAM);
        let mut out = Vec::new();
        for stage in PipelineStage::ALL {
            let draw: f64 = rng.gen();
            let kinds: Vec<SignalKind> = SignalKind::ALL
                .into_iter()
                .filter(|k| *k != stage.native_signal())
                .collect();
            let kind = *kinds.choose(&mut rng).expect("four off-stage kinds");
            let token = self.config.decoy_tokens.get(&kind).and_then(|d| d.choose(&mut rng));
            if let (true, Some(token)) = (draw < rate, token) {
                out.push(ObservationSignal {
                    stage,
                    kind,
                    content: format!("{} {}", signal_prefix(kind), token),
                    origin_attack: None,
                });
            }
        }
        out
    }

    /// Reveals the current stage: benign signal, new injections, downstream
    /// traces of still-active attacks, and provenance checks.
    fn enter_stage(&self, state: &mut EnvState) {
        let stage = state.stage;
        state.signals.push(state.benign_schedule[stage.index()].clone());
        let ambient = state.ambient_schedule.iter().filter(|s| s.stage == stage).cloned();
        state.signals.extend(ambient.collect::<Vec<_>>());

        // Traces of attacks that were already active before this stage.
        for attack in state.active_attacks.iter().filter(|a| a.semantic_detectable) {
            state.signals.push(ObservationSignal {
                stage,
                kind: SignalKind::PipelineLog,
                content: format!("runtime_behavior {}", attack.payload.join(" ")),
                origin_attack: Some(attack.id.clone()),
            });
        }

        for attack in state.scenarios.iter().filter(|a| a.stage == stage) {
            let kind = attack.signal_kind();
            state.signals.push(ObservationSignal {
                stage,
                kind,
                content: format!("{} {}", signal_prefix(kind), attack.payload.join(" ")),
                origin_attack: Some(attack.id.clone()),
            });
            state.injections.push(AttackEvent {
                attack_id: attack.id.clone(),
                class: attack.class,
                step: state.step,
                stage,
                clock_minutes: state.clock_minutes,
            });
            state.active_attacks.push(attack.clone());
        }

        if stage >= PipelineStage::ArtifactPackaging {
            for attack in &state.active_attacks {
                let tampers_artifact = matches!(
                    attack.class,
                    VulnerabilityClass::Injection | VulnerabilityClass::InsecureDeserialization
                );
                let already_reported = state.signals.iter().any(|s| {
                    s.content.starts_with("provenance_check")
                        && s.origin_attack.as_deref() == Some(attack.id.as_str())
                });
                if tampers_artifact && !already_reported {
                    let token = if attack.stage == PipelineStage::DependencyResolution {
                        "dependency_digest_mismatch"
                    } else {
                        "source_digest_mismatch"
                    };
                    state.signals.push(ObservationSignal {
                        stage,
                        kind: SignalKind::PipelineLog,
                        content: format!("provenance_check {token}"),
                        origin_attack: Some(attack.id.clone()),
                    });
                }
            }
        }
    }

    /// Applies one action. Stepping a finished or paused run is an error.
    pub fn step(
        &self,
        state: &EnvState,
        action: MitigationAction,
    ) -> Result<Transition, EnvError> {
        if state.done {
            return Err(EnvError::Finished(state.run_id.clone()));
        }
        if state.paused {
            return Err(EnvError::Paused(state.run_id.clone()));
        }
        let mut next = state.clone();
        let attacks_present = !state.active_attacks.is_empty();
        let accepted = self.developer_response(action, state.rng_seed, state.step);

        let mut mitigated_ids = Vec::new();
        if action != MitigationAction::AllowContinue {
            for attack in &state.active_attacks {
                let neutralized = self.config.mitigation_table.iter().any(|rule| {
                    rule.action == action
                        && rule.matches(attack.class, attack.stage, state.stage)
                        && (!rule.requires_acceptance || accepted)
                });
                if neutralized {
                    mitigated_ids.push(attack.id.clone());
                }
            }
        }

        let delay = self.config.delay(action);
        next.build_delay += delay;
        next.clock_minutes += delay;
        next.controls.apply(action, state.step);

        for id in &mitigated_ids {
            if let Some(attack) = state.active_attacks.iter().find(|a| &a.id == id) {
                next.mitigations.push(AttackEvent {
                    attack_id: id.clone(),
                    class: attack.class,
                    step: state.step,
                    stage: state.stage,
                    clock_minutes: next.clock_minutes,
                });
            }
        }
        next.active_attacks.retain(|a| !mitigated_ids.contains(&a.id));
        // Evidence of a neutralized attack drops out of the observable window.
        let (resolved, kept): (Vec<_>, Vec<_>) = next.signals.drain(..).partition(|s| {
            s.origin_attack
                .as_ref()
                .is_some_and(|id| mitigated_ids.contains(id))
        });
        next.signals = kept;
        next.resolved_signals.extend(resolved);

        let attack_mitigated = !mitigated_ids.is_empty();
        let outcome = OutcomeFlags {
            attack_mitigated,
            false_positive: action != MitigationAction::AllowContinue && !attacks_present,
            developer_accepted: attack_mitigated && accepted,
            build_delay: delay,
        };
        let reward = compute_reward(&outcome, &self.config.reward);

        next.step += 1;
        let holds = action == MitigationAction::PauseBuild
            && next.holds_in_stage + 1 < self.config.max_steps_per_stage;
        if action == MitigationAction::BlockBuild {
            next.done = true;
        } else if holds {
            next.holds_in_stage += 1;
        } else {
            next.clock_minutes += self.config.stage_minutes;
            next.holds_in_stage = 0;
            match state.stage.next() {
                Some(stage) => {
                    next.stage = stage;
                    self.enter_stage(&mut next);
                }
                None => next.done = true,
            }
        }
        if next.done {
            next.terminal_outcome = Some(outcome);
        }
        let done = next.done;
        Ok(Transition {
            next_state: next,
            reward,
            done,
            outcome,
        })
    }

    /// Signals visible to `role`, with ground-truth labels removed.
    pub fn observe(&self, state: &EnvState, role: AgentRole) -> Vec<ObservationSignal> {
        observe(state, role)
    }

    pub fn compute_reward(&self, outcome: &OutcomeFlags) -> f64 {
        compute_reward(outcome, &self.config.reward)
    }

    /// Seeded draw of whether a developer accepts the fix proposed by
    /// `action` at `step` of the run seeded with `run_seed`.
    pub fn developer_response(&self, action: MitigationAction, run_seed: u64, step: u32) -> bool {
        let p = self.config.acceptance_probability(action);
        if p >= 1.0 {
            return true;
        }
        let stream = seed::substream(run_seed, seed::DEVELOPER_STREAM);
        seed::unit_draw(stream, u64::from(step)) < p
    }

    /// Operator pause: holds the run in place and charges the pause cost.
    pub fn pause(&self, state: &EnvState) -> Result<EnvState, EnvError> {
        if state.done {
            return Err(EnvError::Finished(state.run_id.clone()));
        }
        if state.paused {
            return Err(EnvError::Paused(state.run_id.clone()));
        }
        let mut next = state.clone();
        let cost = self.config.delay(MitigationAction::PauseBuild);
        next.paused = true;
        next.build_delay += cost;
        next.clock_minutes += cost;
        Ok(next)
    }

    pub fn resume(&self, state: &EnvState) -> Result<EnvState, EnvError> {
        if !state.paused {
            return Err(EnvError::NotPaused(state.run_id.clone()));
        }
        let mut next = state.clone();
        next.paused = false;
        Ok(next)
    }

    /// Restarts a finished run from its original scenarios and seed.
    pub fn rerun(&self, state: &EnvState) -> Result<EnvState, EnvError> {
        if !state.done {
            return Err(EnvError::InProgress(state.run_id.clone()));
        }
        self.reset_named(state.run_id.clone(), &state.scenarios, state.rng_seed)
    }

    /// Whether the inverse of `action`, applied right after it at `state`,
    /// restores the pipeline controls exactly.
    pub fn rollback_restores(&self, state: &EnvState, action: MitigationAction) -> bool {
        let before = state.controls.clone();
        let mut after = before.clone();
        after.apply(action, state.step);
        after.invert(action, state.step);
        after == before
    }
}

pub fn observe(state: &EnvState, role: AgentRole) -> Vec<ObservationSignal> {
    state
        .signals
        .iter()
        .filter(|s| s.kind.observer() == role)
        .map(ObservationSignal::stripped)
        .collect()
}

fn signal_prefix(kind: SignalKind) -> &'static str {
    match kind {
        SignalKind::CommitDiff => "diff",
        SignalKind::SbomEntry => "sbom",
        SignalKind::PipelineLog => "log",
        SignalKind::PermissionRecord => "permission",
        SignalKind::ConfigManifest => "manifest",
    }
}
