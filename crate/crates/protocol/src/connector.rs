//! In-process stand-in for a CI system, exposing pipeline runs through the
//! four protocol methods. All run mutations go through [`PipelineEnv`].

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use pipeward_core::env::{EnvError, EnvState, PipelineEnv};
use pipeward_core::{AttackScenario, MitigationAction, PipelineStage, SignalKind};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::envelope::{RpcError, ILLEGAL_ACTION, INVALID_PARAMS, UNKNOWN_RUN};
use crate::router::{HandlerResult, Params, Registry};

pub const FETCH_LOGS: &str = "fetch_logs";
pub const FETCH_ARTIFACT: &str = "fetch_artifact";
pub const TRIGGER_ACTION: &str = "trigger_action";
pub const ISSUE_MITIGATION: &str = "issue_mitigation";

pub const METHODS: [&str; 4] = [FETCH_LOGS, FETCH_ARTIFACT, TRIGGER_ACTION, ISSUE_MITIGATION];

/// Pipeline verbs accepted by `trigger_action`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineVerb {
    Rerun,
    Pause,
    Resume,
}

impl PipelineVerb {
    pub fn parse(s: &str) -> Option<PipelineVerb> {
        match s {
            "rerun" => Some(PipelineVerb::Rerun),
            "pause" => Some(PipelineVerb::Pause),
            "resume" => Some(PipelineVerb::Resume),
            _ => None,
        }
    }
}

/// A run to create before serving requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub run_id: String,
    pub seed: u64,
    #[serde(default)]
    pub scenarios: Vec<AttackScenario>,
}

/// The set of runs a replay is served against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    pub runs: Vec<RunSpec>,
}

impl World {
    /// The shipped world the golden transcripts are recorded against.
    pub fn shipped() -> World {
        serde_json::from_str(include_str!("../data/world.json")).expect("shipped world parses")
    }
}

type Runs = Arc<Mutex<BTreeMap<String, EnvState>>>;

#[derive(Debug, Clone)]
pub struct SimulatedConnector {
    env: Arc<PipelineEnv>,
    runs: Runs,
}

fn env_error(e: EnvError) -> RpcError {
    RpcError::new(ILLEGAL_ACTION, e.to_string())
}

fn check_keys(params: &Params, allowed: &[&str]) -> Result<(), RpcError> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(RpcError::new(INVALID_PARAMS, format!("unexpected parameter `{k}`"))),
        None => Ok(()),
    }
}

fn str_param<'a>(params: &'a Params, key: &str) -> Result<&'a str, RpcError> {
    params
        .get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| RpcError::new(INVALID_PARAMS, format!("missing string parameter `{key}`")))
}

fn object(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(map) => map,
        _ => unreachable!("results are built as objects"),
    }
}

fn run_summary(state: &EnvState) -> Map<String, Value> {
    object(json!({
        "run_id": state.run_id,
        "stage": state.stage.name(),
        "step": state.step,
        "paused": state.paused,
        "done": state.done,
        "build_delay": state.build_delay,
    }))
}

/// Stable descriptor of the artifact `name` as built so far.
pub fn artifact_digest(state: &EnvState, name: &str) -> String {
    let mut h = Sha256::new();
    for part in [state.run_id.as_str(), name] {
        h.update((part.len() as u32).to_be_bytes());
        h.update(part.as_bytes());
    }
    for s in &state.signals {
        h.update((s.content.len() as u32).to_be_bytes());
        h.update(s.content.as_bytes());
    }
    hex::encode(h.finalize())
}

impl SimulatedConnector {
    pub fn new(env: PipelineEnv) -> SimulatedConnector {
        SimulatedConnector {
            env: Arc::new(env),
            runs: Arc::new(Mutex::new(BTreeMap::new())),
        }
    }

    pub fn with_world(env: PipelineEnv, world: &World) -> Result<SimulatedConnector, EnvError> {
        let connector = SimulatedConnector::new(env);
        for run in &world.runs {
            connector.create_run(&run.run_id, &run.scenarios, run.seed)?;
        }
        Ok(connector)
    }

    pub fn env(&self) -> &PipelineEnv {
        &self.env
    }

    pub fn create_run(&self, run_id: &str, scenarios: &[AttackScenario], seed: u64) -> Result<(), EnvError> {
        let state = self.env.reset_named(run_id, scenarios, seed)?;
        self.runs.lock().expect("runs lock").insert(run_id.to_string(), state);
        Ok(())
    }

    /// Copy of a run's current state.
    pub fn snapshot(&self, run_id: &str) -> Option<EnvState> {
        self.runs.lock().expect("runs lock").get(run_id).cloned()
    }

    fn with_run<T>(
        &self,
        params: &Params,
        f: impl FnOnce(&PipelineEnv, &mut EnvState) -> Result<T, RpcError>,
    ) -> Result<T, RpcError> {
        let run_id = str_param(params, "run_id")?;
        let mut runs = self.runs.lock().expect("runs lock");
        let state = runs
            .get_mut(run_id)
            .ok_or_else(|| RpcError::new(UNKNOWN_RUN, format!("unknown run `{run_id}`")))?;
        f(&self.env, state)
    }

    pub fn fetch_logs(&self, params: &Params) -> HandlerResult {
        check_keys(params, &["run_id", "stage"])?;
        let stage_name = str_param(params, "stage")?;
        let stage = PipelineStage::parse(stage_name)
            .ok_or_else(|| RpcError::new(INVALID_PARAMS, format!("unknown stage `{stage_name}`")))?;
        self.with_run(params, |_, state| {
            let lines: Vec<&str> = state
                .signals
                .iter()
                .filter(|s| s.kind == SignalKind::PipelineLog && s.stage == stage)
                .map(|s| s.content.as_str())
                .collect();
            Ok(object(json!({
                "run_id": state.run_id,
                "stage": stage.name(),
                "lines": lines,
            })))
        })
    }

    pub fn fetch_artifact(&self, params: &Params) -> HandlerResult {
        check_keys(params, &["run_id", "name"])?;
        let name = str_param(params, "name")?;
        self.with_run(params, |_, state| {
            Ok(object(json!({
                "run_id": state.run_id,
                "name": name,
                "stage": state.stage.name(),
                "built": state.stage >= PipelineStage::ArtifactPackaging,
                "digest": artifact_digest(state, name),
            })))
        })
    }

    pub fn trigger_action(&self, params: &Params) -> HandlerResult {
        check_keys(params, &["run_id", "action"])?;
        let verb_name = str_param(params, "action")?;
        let verb = PipelineVerb::parse(verb_name).ok_or_else(|| {
            RpcError::new(INVALID_PARAMS, format!("unknown pipeline action `{verb_name}`"))
        })?;
        self.with_run(params, |env, state| {
            let next = match verb {
                PipelineVerb::Pause => env.pause(state),
                PipelineVerb::Resume => env.resume(state),
                PipelineVerb::Rerun => env.rerun(state),
            }
            .map_err(env_error)?;
            *state = next;
            Ok(run_summary(state))
        })
    }

    pub fn issue_mitigation(&self, params: &Params) -> HandlerResult {
        check_keys(params, &["run_id", "mitigation"])?;
        let name = str_param(params, "mitigation")?;
        let action = MitigationAction::parse(name)
            .ok_or_else(|| RpcError::new(INVALID_PARAMS, format!("unknown mitigation `{name}`")))?;
        self.with_run(params, |env, state| {
            let t = env.step(state, action).map_err(env_error)?;
            *state = t.next_state;
            let mut result = run_summary(state);
            result.insert("mitigation".into(), json!(action.name()));
            result.insert("outcome".into(), serde_json::to_value(t.outcome).expect("flags serialize"));
            result.insert("reward".into(), json!(t.reward));
            Ok(result)
        })
    }

    /// Handlers for the four methods, sharing this connector's runs.
    pub fn registry(&self) -> Registry {
        let mut registry = Registry::new();
        let c = self.clone();
        registry.register(FETCH_LOGS, move |p: &Params| c.fetch_logs(p));
        let c = self.clone();
        registry.register(FETCH_ARTIFACT, move |p: &Params| c.fetch_artifact(p));
        let c = self.clone();
        registry.register(TRIGGER_ACTION, move |p: &Params| c.trigger_action(p));
        let c = self.clone();
        registry.register(ISSUE_MITIGATION, move |p: &Params| c.issue_mitigation(p));
        registry
    }
}
