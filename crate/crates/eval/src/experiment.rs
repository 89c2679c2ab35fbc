//! The four experiment arms and the seeded episode loop that runs them.

use std::collections::BTreeSet;
use std::fmt;

use pipeward_core::agents::{dispatch, DefenseAgents, ExecutionGraph, RuleReasoner};
use pipeward_core::env::{observe, ConfigError, EnvConfig, EnvError, EnvState, PipelineEnv};
use pipeward_core::policy::{
    encode_state, train, Policy, PipelineTask, PolicyError, TrainConfig, TrainError,
};
use pipeward_core::{seed, AgentRole, MitigationAction, PipelineStage, VulnerabilityClass};
use pipeward_ledger::{
    action_owner, signals_digest, AppendError, AuditSink, Ledger, LedgerEntry, NullSink,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{compute_metrics, DecisionRecord, EpisodeTrace, Label, Metrics, MetricsError};
use crate::suite::ScenarioSuite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    RuleBased,
    ProvenanceOnly,
    RLOnly,
    Proposed,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::RuleBased,
        BaselineKind::ProvenanceOnly,
        BaselineKind::RLOnly,
        BaselineKind::Proposed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::RuleBased => "RuleBased",
            BaselineKind::ProvenanceOnly => "ProvenanceOnly",
            BaselineKind::RLOnly => "RLOnly",
            BaselineKind::Proposed => "Proposed",
        }
    }

    /// Accepts the canonical name in any ASCII case, or its kebab form
    /// (`rule-based`, `rl-only`, ...).
    pub fn parse(s: &str) -> Option<BaselineKind> {
        let folded: String = s.chars().filter(|c| *c != '-' && *c != '_').collect();
        BaselineKind::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(&folded))
    }

    /// Arms whose decisions come from a trained policy.
    pub fn needs_policy(self) -> bool {
        matches!(self, BaselineKind::Proposed | BaselineKind::RLOnly)
    }

    /// Reasoner the arm's agents report through.
    pub fn reasoner(self) -> RuleReasoner {
        match self {
            BaselineKind::Proposed => RuleReasoner::default(),
            _ => RuleReasoner::uncorrelated(),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Components of the proposed stack that an ablation can switch off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Reasoner,
    Rl,
    Ledger,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Reasoner, Component::Rl, Component::Ledger];

    pub fn name(self) -> &'static str {
        match self {
            Component::Reasoner => "reasoner",
            Component::Rl => "rl",
            Component::Ledger => "ledger",
        }
    }

    pub fn parse(s: &str) -> Option<Component> {
        Component::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("arm {0} needs a trained policy")]
    MissingPolicy(BaselineKind),
    #[error("components can only be disabled on the Proposed arm, not {0}")]
    DisableOnBaseline(BaselineKind),
    #[error("suite `{0}` is empty")]
    EmptySuite(String),
    #[error("experiment needs at least one episode")]
    NoEpisodes,
    #[error("policy does not fit the pipeline state space: {0}")]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("ledger refused an episode block: {0}")]
    Ledger(#[from] AppendError),
    #[error("ledger failed verification after the experiment: {0}")]
    LedgerInvalid(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Mismatch(String),
}

/// Everything besides the arm, suite, seed and policy that shapes a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentOptions {
    pub env: EnvConfig,
    pub episodes: usize,
    /// Added to every intervention of the RuleBased and ProvenanceOnly
    /// arms: a human acts on their alerts.
    pub review_latency_minutes: f64,
    pub disable: BTreeSet<Component>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            env: calibration_env(),
            episodes: 200,
            review_latency_minutes: 25.0,
            disable: BTreeSet::new(),
        }
    }
}

/// Environment the calibration suite is tuned for: shipped defaults plus
/// stray permission/config decoys at a fifth of the stages.
pub fn calibration_env() -> EnvConfig {
    EnvConfig {
        ambient_decoy_rate: 0.2,
        ..EnvConfig::default()
    }
}

/// Shipped training recipe for the learning arms.
pub fn calibration_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        gamma: 0.9,
        episodes: 200_000,
        seed,
        ..TrainConfig::dqn()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSummary {
    /// Blocks after genesis.
    pub blocks: usize,
    pub entries: usize,
    pub decisions: usize,
    pub valid: bool,
}

/// Metrics of one arm on one suite, with what is needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub arm: BaselineKind,
    pub suite_id: String,
    pub suite_hash: String,
    pub seed: u64,
    pub disabled: Vec<Component>,
    pub metrics: Metrics,
    pub ledger: Option<LedgerSummary>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(json: &str) -> Result<MetricsReport, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// `metric,value` rows. Numbers use shortest round-trip form, so they
    /// parse back to exactly the values in the JSON report.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let m = &self.metrics;
        let mut out = String::from("metric,value\n");
        let mut row = |k: &str, v: String| writeln!(out, "{k},{v}").unwrap();
        row("arm", self.arm.name().into());
        row("suite_id", self.suite_id.clone());
        row("suite_hash", self.suite_hash.clone());
        row("seed", self.seed.to_string());
        row("episodes", m.episodes.to_string());
        for (class, c) in &m.per_class {
            row(&format!("{class}.tp"), c.counts.tp.to_string());
            row(&format!("{class}.fp"), c.counts.fp.to_string());
            row(&format!("{class}.fn"), c.counts.fn_.to_string());
            row(&format!("{class}.tn"), c.counts.tn.to_string());
            row(&format!("{class}.precision"), format!("{:?}", c.precision));
            row(&format!("{class}.recall"), format!("{:?}", c.recall));
            row(&format!("{class}.f1"), format!("{:?}", c.f1));
        }
        row(
            "mttm_minutes",
            m.mttm_minutes.map(|v| format!("{v:?}")).unwrap_or_default(),
        );
        row("overhead_percent", format!("{:?}", m.overhead_percent));
        row("autonomy_rate", format!("{:?}", m.autonomy_rate));
        row("rollback_success_rate", format!("{:?}", m.rollback_success_rate));
        row("attacks", m.attacks.to_string());
        row("mitigated_attacks", m.mitigated_attacks.to_string());
        row("interventions", m.interventions.to_string());
        row("false_positive_actions", m.false_positive_actions.to_string());
        out
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: MetricsReport,
    pub traces: Vec<EpisodeTrace>,
    /// The chain written by the Proposed arm, unless the ledger was disabled.
    pub ledger: Option<Ledger>,
}

struct Decision {
    action: MitigationAction,
    verdict: Option<VulnerabilityClass>,
    severity: f64,
    state_id: Option<usize>,
    rationale: String,
}

/// How one arm turns a pipeline state into an action.
struct Stack<'a> {
    arm: BaselineKind,
    graph: ExecutionGraph,
    agents: DefenseAgents,
    reasoner: RuleReasoner,
    policy: Option<&'a Policy>,
}

fn rule_mapped(class: VulnerabilityClass) -> MitigationAction {
    match class {
        VulnerabilityClass::BrokenAccessControl => MitigationAction::RevokeCredentials,
        _ => MitigationAction::BlockBuild,
    }
}

impl Stack<'_> {
    fn decide(&self, state: &EnvState) -> Result<Decision, EvalError> {
        if self.arm == BaselineKind::ProvenanceOnly {
            return Ok(provenance_decision(state));
        }
        let trace = dispatch(&self.graph, &self.agents, state, &self.reasoner);
        let assessment = trace.assessment;
        let state_id = encode_state(state, &assessment);
        let action = match (self.arm, self.policy) {
            (BaselineKind::RuleBased, _) => assessment
                .verdict
                .map_or(MitigationAction::AllowContinue, rule_mapped),
            (_, Some(policy)) => policy.actions[policy.greedy_index(state_id)?],
            // RL disabled: the reasoner's first preference.
            (_, None) => assessment.candidate_actions[0],
        };
        Ok(Decision {
            action,
            verdict: assessment.verdict,
            severity: assessment.severity,
            state_id: Some(state_id),
            rationale: assessment.rationale,
        })
    }
}

/// Reacts only to artifact digest mismatches, which name no class: a source
/// mismatch is reported as injection, a dependency mismatch as unsafe
/// deserialization.
fn provenance_decision(state: &EnvState) -> Decision {
    let logs = observe(state, AgentRole::CICDMonitoring);
    let mismatch = logs.iter().find_map(|s| {
        let rest = s.content.strip_prefix("provenance_check ")?;
        if rest.contains("dependency_digest_mismatch") {
            Some(VulnerabilityClass::InsecureDeserialization)
        } else if rest.contains("source_digest_mismatch") {
            Some(VulnerabilityClass::Injection)
        } else {
            None
        }
    });
    match mismatch {
        Some(class) => Decision {
            action: MitigationAction::BlockBuild,
            verdict: Some(class),
            severity: 1.0,
            state_id: None,
            rationale: format!("artifact digest mismatch at {}", state.stage),
        },
        None => Decision {
            action: MitigationAction::AllowContinue,
            verdict: None,
            severity: 0.0,
            state_id: None,
            rationale: "artifact digests match".into(),
        },
    }
}

/// The arm's environment: human-operated arms pay the review latency on
/// every intervention.
fn arm_env(arm: BaselineKind, options: &ExperimentOptions) -> Result<PipelineEnv, EvalError> {
    let mut config = options.env.clone();
    if matches!(arm, BaselineKind::RuleBased | BaselineKind::ProvenanceOnly) {
        for action in MitigationAction::ALL {
            if action != MitigationAction::AllowContinue {
                let d = config.delay(action) + options.review_latency_minutes;
                config.delay_minutes.insert(action, d);
            }
        }
    }
    Ok(PipelineEnv::new(config)?)
}

/// Trains the policy a learning arm acts with, over the suite's episodes.
pub fn train_policy(
    arm: BaselineKind,
    suite: &ScenarioSuite,
    env: &EnvConfig,
    config: &TrainConfig,
) -> Result<Policy, EvalError> {
    suite
        .validate()
        .map_err(|_| EvalError::EmptySuite(suite.id.clone()))?;
    let mut task = PipelineTask::new(
        PipelineEnv::new(env.clone())?,
        ExecutionGraph::shipped_sweep(),
        DefenseAgents::default(),
        arm.reasoner(),
        suite.episode_specs(),
    );
    Ok(train(&mut task, config)?)
}

fn agent_id(role: AgentRole) -> String {
    format!("{}-agent", role.name())
}

/// Runs `options.episodes` episodes of `arm`, cycling through the suite.
/// The Proposed arm writes one ledger block per episode holding one entry
/// per decision.
pub fn run_experiment(
    arm: BaselineKind,
    suite: &ScenarioSuite,
    seed: u64,
    policy: Option<&Policy>,
    options: &ExperimentOptions,
) -> Result<Experiment, EvalError> {
    if suite.validate().is_err() {
        return Err(EvalError::EmptySuite(suite.id.clone()));
    }
    if options.episodes == 0 {
        return Err(EvalError::NoEpisodes);
    }
    if arm != BaselineKind::Proposed && !options.disable.is_empty() {
        return Err(EvalError::DisableOnBaseline(arm));
    }
    let disabled = |c| options.disable.contains(&c);
    let policy = if arm.needs_policy() && !disabled(Component::Rl) {
        Some(policy.ok_or(EvalError::MissingPolicy(arm))?)
    } else {
        None
    };
    let reasoner = if disabled(Component::Reasoner) {
        RuleReasoner::uncorrelated()
    } else {
        arm.reasoner()
    };
    let stack = Stack {
        arm,
        graph: ExecutionGraph::shipped_sweep(),
        agents: DefenseAgents::default(),
        reasoner,
        policy,
    };
    let env = arm_env(arm, options)?;
    let undefended_minutes = PipelineStage::COUNT as f64 * env.config().stage_minutes;

    let mut ledger = (arm == BaselineKind::Proposed && !disabled(Component::Ledger))
        .then(|| Ledger::with_defaults(seed::substream(seed, LEDGER_STREAM)));
    let mut null_sink = NullSink;
    let mut ledger_clock = 0.0f64;
    let mut ledger_entries = 0;
    let mut ledger_decisions = 0;

    let specs = suite.episode_specs();
    let mut traces = Vec::with_capacity(options.episodes);
    for index in 0..options.episodes {
        let (spec, run_seed) = suite.episode(index, seed);
        debug_assert_eq!(spec, specs[index % specs.len()]);
        let truth = match spec.first() {
            Some(s) => Label::Attack(s.class),
            None => Label::Benign,
        };
        let mut state = env.reset_named(format!("{}-{index:04}", arm.name()), &spec, run_seed)?;
        let mut decisions = Vec::new();
        let mut entries = Vec::new();
        while !state.done && decisions.len() < env.config().max_episode_steps() as usize {
            let d = stack.decide(&state)?;
            let rollback_restores = env.rollback_restores(&state, d.action);
            let t = env.step(&state, d.action)?;
            if arm == BaselineKind::Proposed {
                let role = action_owner(d.action);
                let observed: Vec<_> = state.signals.iter().map(|s| s.stripped()).collect();
                entries.push(LedgerEntry {
                    agent_id: agent_id(role),
                    role,
                    signals_digest: signals_digest(&observed),
                    reasoning_summary: d.rationale.clone(),
                    action: d.action,
                    outcome: t.outcome,
                    timestamp: (ledger_clock + state.clock_minutes).floor() as u64,
                });
            }
            decisions.push(DecisionRecord {
                step: state.step,
                stage: state.stage,
                clock_minutes: state.clock_minutes,
                state_id: d.state_id,
                verdict: d.verdict,
                severity: d.severity,
                action: d.action,
                outcome: t.outcome,
                reward: t.reward,
                rollback_restores,
                rationale: d.rationale,
            });
            state = t.next_state;
        }

        // Runs are back to back on the ledger's clock; a blocked run still
        // occupies its full pipeline slot.
        ledger_clock += undefended_minutes + state.build_delay;
        let ledger_block = if arm == BaselineKind::Proposed {
            ledger_decisions += decisions.len();
            ledger_entries += entries.len();
            let now = ledger_clock.ceil() as u64;
            match ledger.as_mut() {
                Some(l) => l.record(entries, now)?,
                None => null_sink.record(entries, now)?,
            }
        } else {
            None
        };

        traces.push(EpisodeTrace {
            episode: index,
            run_id: state.run_id.clone(),
            seed: run_seed,
            truth: Some(truth),
            decisions,
            injections: state.injections.clone(),
            mitigations: state.mitigations.clone(),
            build_delay: state.build_delay,
            undefended_minutes,
            ledger_block,
        });
    }

    let ledger_summary = match &ledger {
        Some(l) => {
            let verdict = l.verify();
            if !verdict.is_valid() {
                return Err(EvalError::LedgerInvalid(format!("{verdict:?}")));
            }
            Some(LedgerSummary {
                blocks: l.blocks().len() - 1,
                entries: l.blocks().iter().map(|b| b.entries.len()).sum(),
                decisions: ledger_decisions,
                valid: true,
            })
        }
        None => None,
    };
    debug_assert!(ledger.is_none() || ledger_entries == ledger_decisions);

    let report = MetricsReport {
        arm,
        suite_id: suite.id.clone(),
        suite_hash: suite.hash(),
        seed,
        disabled: options.disable.iter().copied().collect(),
        metrics: compute_metrics(&traces)?,
        ledger: ledger_summary,
    };
    Ok(Experiment {
        report,
        traces,
        ledger,
    })
}

const LEDGER_STREAM: &str = "ledger";
